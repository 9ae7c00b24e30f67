"""
A farm under frame loss
=======================

Runs the deterministic end-to-end scenario: one cloud, one gateway, and
three edge nodes on a simulated network that drops twenty percent of all
frames.  Mid-run the cloud publishes a better model; every edge must
notice during an idle sync, download it chunk by chunk, verify it, and
hot-swap, while no telemetry record is lost or duplicated.
"""

import json
import sys
import tempfile

from farmlight import sim_e2e

# Artifacts are trained on demand into a temp dir on first run (a
# directory with student_sft.flsm/student_final.flsm can be passed
# instead to skip the training time).
artifacts = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(
    prefix="farmlight-fleet-")

print("running: 3 edges, 20% frame loss, seed 0 ...")
summary = sim_e2e.run_e2e(seed=0, n_edges=3, drop_rate=0.2,
                          artifacts_dir=artifacts)

# The run itself enforces its promises (convergence deadline, exact
# telemetry, alerting) and raises if any fail; what's left to do here
# is read the story out of the summary.
print(f"\npublished model {summary['published_version']}")
for edge_id, swap_at in sorted(summary["swap_times_s"].items()):
    version = summary["edge_versions"][edge_id]
    print(f"  {edge_id}: swapped at t={swap_at:.1f}s sim "
          f"(deadline {summary['convergence_deadline_s']:.0f}s) -> {version}")

frames = summary["frames"]
print(f"\nframes: {frames['sent']} sent, {frames['dropped']} dropped "
      f"({frames['dropped'] / frames['sent']:.0%})")
print(f"telemetry: {summary['records_stored']}/{summary['records_generated']}"
      f" records stored, {len(summary['batches_stored'])} batches, "
      f"no gaps, no duplicates")
print(f"anomalies: {summary['anomalies_injected']} injected, "
      f"{summary['alerts_generated']} alerts raised, "
      f"{summary['alerts_pushed_to_cloud']} pushed upstream")
print(f"sim clock: {summary['sim_time_s']:.0f}s "
      f"(wall time was a fraction of that)")

# The summary is canonical JSON friendly: same seed, same bytes.
print("\nfull summary:")
print(json.dumps(summary, indent=2, sort_keys=True)[:400], "...")
