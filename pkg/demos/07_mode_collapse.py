"""Which scores notice when a generator collapses to a single point?

Ten well-separated clients score a generator timeline: three steps of a
broad Gaussian matching the pooled moments, then a collapse to a single
client's mean.  The pooled distance and both kernel aggregations jump by
large factors at the collapse step; the avg Gaussian distance barely
moves, because each client was already far from the broad generator.
"""

from fedeval import default_collapse_scenario, run_scenario

result = run_scenario(default_collapse_scenario(seed=0))["result"]

print(f"{'step':>4} {'fid_avg':>12} {'fid_all':>12} {'kid_avg':>10} {'kid_all':>10}")
for row in result.rows:
    collapse = "  <- collapse" if row["step"] == result.collapse_step else ""
    print(
        f"{row['step']:>4} {row['fid_avg']:12.3f} {row['fid_all']:12.3f} "
        f"{row['kid_avg']:10.4f} {row['kid_all']:10.4f}{collapse}"
    )

print("\nscore ratio at the collapse step (threshold 2.0):")
for metric, ratio in result.ratios.items():
    flag = "DETECTED" if result.detections[metric] else "missed"
    print(f"  {metric:>8}: {ratio:10.3f}  {flag}")
