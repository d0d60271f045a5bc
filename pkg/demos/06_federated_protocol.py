"""What each aggregation mode reveals and what it costs on the wire.

A simulated round charges 8 bytes per transmitted real plus a 16-byte
header per message.  Sending scalar scores is cheapest but only supports
avg aggregates; sending moments unlocks the pooled Gaussian distance;
raw uploads unlock everything; kernel block sums support kernel scores,
but the pooled kernel score forces pairwise raw exchange between
clients, which the trace makes visible.
"""

import numpy as np

from fedeval import CapabilityError, Client, ClientSet, run_round

rng = np.random.default_rng(1)
clients = ClientSet(
    [Client(id=f"c{i}", embeddings=rng.normal(size=(100, 4)) + 2.0 * i) for i in range(4)]
)
gen = rng.normal(size=(150, 4))

print(f"{'mode':>14} {'metrics':<32} {'messages':>9} {'bytes':>9}")
for mode, metrics in [
    ("scores", ["fid_avg", "kid_avg"]),
    ("moments", ["fid_avg", "fid_all"]),
    ("raw", ["fid_avg", "fid_all", "kid_avg", "kid_all"]),
    ("kernel_blocks", ["kid_avg", "kid_all"]),
]:
    report, trace = run_round(clients, gen, mode, metrics)
    print(
        f"{mode:>14} {','.join(metrics):<32} {len(trace.messages):>9} "
        f"{trace.total_payload_bytes:>9}"
    )

print("\nscores mode structurally refuses pooled aggregates:")
try:
    run_round(clients, gen, "scores", ["fid_all"])
except CapabilityError as exc:
    print("  CapabilityError:", exc)

report, trace = run_round(clients, gen, "kernel_blocks", ["kid_all"])
kinds = [m.kind for m in trace.messages]
print("\nkernel_blocks message kinds for the pooled score:")
print(" ", {k: kinds.count(k) for k in dict.fromkeys(kinds)})
print("  (the RawDataReply entries are client-to-client raw exchanges)")
