"""The same workflow through the command-line entry point.

Every artifact carries the tool version, the seed and a hash of the
configuration that produced it.
"""
import json
import os
import tempfile

from iomt_detect.cli import run

os.chdir(tempfile.mkdtemp())
steps = [
    ["synth", "--segment", "attack-specific", "--n", "600", "--attack-ratio", "0.3", "--out", "flows.csv"],
    ["train", "--model", "gru", "--set", "epochs=10", "--in", "flows.csv", "--out", "gru.json"],
    ["eval", "--model", "gru.json", "--in", "flows.csv", "--out", "report", "--name", "GRU"],
]
for argv in steps:
    print("$ iomt-detect", " ".join(argv), flush=True)
    code = run(argv)
    print(f"(exit {code})\n", flush=True)

with open("gru.json") as fh:
    print("provenance:", json.load(fh)["provenance"])
