"""
End-to-end runs from the command line
=====================================

``reltransport simulate`` writes a dataset and its true values,
``reltransport estimate`` writes a JSON result that embeds its full
configuration, and passing that result back with ``--config`` repeats the
run byte for byte. The same entry point is called in-process here.
"""

import json
import tempfile
from pathlib import Path

from reltransport import worked_example
from reltransport.cli import main

work = Path(tempfile.mkdtemp())
(work / "scenario.json").write_text(json.dumps(worked_example().to_document(), indent=2))

main(["simulate", "--scenario", str(work / "scenario.json"), "--n1", "2000", "--n0", "2000",
      "--seed", "11", "--out", str(work / "data.csv"), "--truth", str(work / "truth.json")])
main(["estimate", "--data", str(work / "data.csv"), "--x-cols", "x", "--outcome-kind", "binary",
      "--bootstrap", "200", "--seed", "3", "--out", str(work / "result.json")])

result = json.loads((work / "result.json").read_text())
truth = json.loads((work / "truth.json").read_text())["truth"]
print(f"phi {result['point']:.4f} [{result['ci_lower']:.4f}, {result['ci_upper']:.4f}], truth {truth['mean_ratio']}")

first = (work / "result.json").read_bytes()
main(["estimate", "--config", str(work / "result.json")])
print("re-run identical:", first == (work / "result.json").read_bytes())
