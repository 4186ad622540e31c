"""Write the reconstructed Sioux Falls (20 -> 10) four-path subnetwork.

Four internally disjoint 4-edge routes join node 20 to node 10 through
new intermediate nodes 25..36. Every edge of a route shares the route's
per-edge free-flow time and capacity. The values were calibrated (see
tools/calibrate_subnet.py), then every free-flow time was scaled by the
same factor (about 1.011) to bring the optimum's per-unit time to 19.0;
a common scale leaves all ratios and orderings unchanged. This script
only writes the values out.
"""

from __future__ import annotations

import argparse

ROUTES = (
    # per-edge free-flow time (min), capacity (veh/h)
    (4.27, 61.0),
    (4.76, 35.9),
    (5.87, 25.2),
    (6.31, 30.8),
)
ORIGIN, DESTINATION = 20, 10


def build(routes=ROUTES) -> str:
    rows = []
    nid = 25
    for t, c in routes:
        nodes = [ORIGIN, nid, nid + 1, nid + 2, DESTINATION]
        nid += 3
        for a, b in zip(nodes, nodes[1:]):
            rows.append(f"\t{a}\t{b}\t{c:g}\t{t:g}\t{t:g}\t0.15\t4\t0\t0\t1\t;")
    head = [
        "<NUMBER OF ZONES> 24",
        f"<NUMBER OF NODES> {2 + 3 * len(routes)}",
        "<FIRST THRU NODE> 1",
        f"<NUMBER OF LINKS> {len(rows)}",
        "<END OF METADATA>",
        "",
        "~ Reconstructed Sioux Falls subnetwork for OD (20, 10), version 1",
        "~\tinit_node\tterm_node\tcapacity\tlength\tfree_flow_time\tb\tpower\tspeed\ttoll\tlink_type\t;",
    ]
    return "\n".join(head + rows) + "\n"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    args = ap.parse_args()
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(build())


if __name__ == "__main__":
    main()
