/* Minimal C consumer of the fenceflow API.
 *
 * Build (from the workspace root, after `cargo build -p fenceflow-ffi`):
 *   cc crates/ffi/examples/capi_demo.c \
 *      -Icrates/ffi/include \
 *      target/debug/libfenceflow_ffi.a -lm -o capi_demo
 */
#include <stdio.h>

#include "fenceflow.h"

int main(void) {
  printf("fenceflow %s\n", ff_version());

  double d = ff_haversine_m(118.0, 24.5, 118.01, 24.5);
  printf("0.01 deg of longitude at 24.5N: %.1f m\n", d);

  printf("congestion(in=10, out=3, pc=5) = %.2f\n",
         ff_congestion_density(10, 3, 5));

  /* A ~6 m^2 fence: 2 m x 3 m at 24.5 N. */
  double dlat = 3.0 / 111194.9266;
  double dlon = 2.0 / (111194.9266 * 0.90996);
  double ring[] = {
      118.1, 24.5, 118.1 + dlon, 24.5, 118.1 + dlon, 24.5 + dlat,
      118.1, 24.5 + dlat,
  };
  double area = 0.0;
  if (ff_polygon_area_m2(ring, 4, &area) != FF_STATUS_OK) {
    fprintf(stderr, "area computation failed\n");
    return 1;
  }
  printf("fence area %.3f m^2 -> capacity %u slots\n", area,
         ff_capacity_from_area(area, 1.2));

  /* Generate a small dataset and run the full pipeline through the C API. */
  if (ff_synth("/tmp/fenceflow-capi-demo", 7, 20, 40, 300) != FF_STATUS_OK) {
    fprintf(stderr, "synth failed\n");
    return 1;
  }
  FfPipeline *p = NULL;
  const char *config =
      "{\"inputs\":{"
      "\"events\":\"/tmp/fenceflow-capi-demo/events.csv\","
      "\"fences\":\"/tmp/fenceflow-capi-demo/fences.geojson\","
      "\"pois\":\"/tmp/fenceflow-capi-demo/pois.csv\"},"
      "\"out_dir\":\"/tmp/fenceflow-capi-demo/out\",\"seed\":7}";
  if (ff_pipeline_new(config, &p) != FF_STATUS_OK) {
    fprintf(stderr, "pipeline creation failed\n");
    return 1;
  }
  FfStatus st = ff_pipeline_run(p, FF_COMMAND_CLASSIFY);
  if (st != FF_STATUS_OK) {
    fprintf(stderr, "classify failed: %s\n", ff_pipeline_last_error(p));
    ff_pipeline_free(p);
    return (int)st;
  }
  printf("classify ok; see /tmp/fenceflow-capi-demo/out\n");
  ff_pipeline_free(p);
  return 0;
}
