#include <stdio.h>
#include <string.h>
#include "ledgerbench.h"

#define CHECK(x) do { if ((x) != LB_STATUS_OK) { fprintf(stderr, "%s: %s\n", #x, lb_last_error()); return 1; } } while (0)

int main(void) {
    LbScenario *sc = NULL;
    const char *json = "{\"name\":\"c\",\"nodes\":4,\"run\":{\"clients\":2,\"rate\":10,\"duration\":3000}}";
    CHECK(lb_scenario_from_json(json, &sc));
    LbResult *r = NULL;
    CHECK(lb_run(sc, NULL, &r));
    if (lb_result_fork_ratio(r) != 1.0) return 2;
    char *s = NULL;
    CHECK(lb_result_summary_json(r, &s));
    if (strstr(s, "\"throughput\"") == NULL) return 3;
    lb_string_free(s);
    lb_result_free(r);

    LbCluster *c = NULL;
    CHECK(lb_cluster_new(sc, &c));
    char *resp = NULL;
    CHECK(lb_cluster_request(c, "{\"method\":\"status\"}", &resp));
    if (strstr(resp, "\"ok\"") == NULL) return 4;
    lb_string_free(resp);
    lb_cluster_free(c);
    lb_scenario_free(sc);

    if (lb_scenario_from_json("{\"name\":\"x\",\"bogus\":1}", &sc) != LB_STATUS_CONFIG) return 5;
    if (strstr(lb_last_error(), "bogus") == NULL) return 6;
    printf("ok\n");
    return 0;
}
