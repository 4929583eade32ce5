"""End-to-end run: corpus -> scores -> Markdown report, via the CLI.

The composite estimators (cot1, cot2) consult several aspects before
deciding, and on the toy corpus that lifts their segment-level Kendall
tau above every one-step estimator. The same comparison is what the
report is for on real data.
"""
import json
import subprocess
import sys
from pathlib import Path

from kpe import write_toy_corpus

root = Path(__file__).parent / "out" / "report_demo"
write_toy_corpus(root)
config = {
    "segments": str(root / "segments.tsv"),
    "outputs": str(root / "outputs.tsv"),
    "judgments": str(root / "judgments.tsv"),
    "provider": "mock",
    "mock_fixtures": str(root / "fixtures.json"),
    "out": str(root / "out"),
    "estimators": [
        "gemba",
        "prompt1_perplexity",
        "prompt2_token",
        "prompt3_sentence",
        "cot1",
        "cot2",
    ],
}
(root / "config.json").write_text(json.dumps(config, indent=2), encoding="utf-8")

for args in (
    ["score", "--config", str(root / "config.json")],
    ["report", "--scores", str(root / "out"),
     "--judgments", str(root / "judgments.tsv"), "--out", str(root / "out")],
):
    print(f"$ kpe {' '.join(args[:1])} ...", flush=True)
    subprocess.run([sys.executable, "-m", "kpe.cli", *args], check=True)

print(f"\n{root / 'out' / 'report.md'}:\n")
print((root / "out" / "report.md").read_text(encoding="utf-8"))
