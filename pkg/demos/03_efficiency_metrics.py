"""Compute per-task efficiency metrics from kinematics and events.

The default registry carries 13 kinematic and 33 event metrics; values
aggregate across a task's segments by each metric's rule, so the same
code serves single-segment and split-segment predictions.
"""

from surgflow import SynthConfig, TASK_NAMES, compute_metrics, default_registry, generate_procedure

record = generate_procedure(SynthConfig(seed=11))
registry = default_registry()
print(f"registry: {len(registry.kinematic_specs)} kinematic + "
      f"{len(registry.event_specs)} event metrics")

vectors = compute_metrics(registry, record, record.ground_truth)

shown = [
    "path_length_psm1",
    "path_length_psm2",
    "mean_speed_psm1",
    "idle_fraction",
    "count_energy_on",
    "rate_per_min_camera_control_on",
    "mean_gap_s_clutch_on",
]
header = "task  " + "  ".join(f"{name[:18]:>18}" for name in shown)
print("\n" + header)
for vec in vectors:
    cells = []
    for name in shown:
        value = vec.values[name]
        cells.append(f"{'missing':>18}" if value is None else f"{value:18.3f}")
    print(f"{vec.task:4d}  " + "  ".join(cells))

# A metric the data cannot support comes back missing, never zero:
sparse = [name for name, v in vectors[0].values.items() if v is None]
print(f"\ntask {vectors[0].task} ({TASK_NAMES[vectors[0].task]}) missing entries: {sparse}")
