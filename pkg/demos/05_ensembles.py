"""Stacking and score-average voting over the point detectors."""
from iomt_detect.experiments import ExperimentConfig, run_experiment
from iomt_detect.evalkit import render_report

run = run_experiment(ExperimentConfig("multi-protocol", seed=0, difficulty=2))
counts = run.details["flag_counts"]
print(f"flags on {run.details['n_test']} held-out rows:")
for name, c in counts.items():
    print(f"  {name:<12} {c}")

text, _, _ = render_report(run.results)
print()
print(text)
