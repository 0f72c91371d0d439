"""Circle-packing evaluator conforming to the sandbox contract.

Invoked as ``python3 evaluator.py <workdir> <metrics_out>``. Runs the
candidate's entry point (main.py) inside the workdir, reads the
solutions.json it writes, validates every packing, and writes the
metrics JSON (mean sum of radii as "score", plus per-n sums and
validity flags).
"""

import json
import subprocess
import sys
from pathlib import Path

from benchpack.scoring import load_solutions, score_packings


def main() -> int:
    if len(sys.argv) != 3:
        sys.stderr.write("usage: evaluator.py <workdir> <metrics_out>\n")
        return 2
    workdir, metrics_out = sys.argv[1], sys.argv[2]

    proc = subprocess.run([sys.executable, "main.py"], cwd=workdir,
                          capture_output=True, text=True)
    sys.stdout.write(proc.stdout)
    sys.stderr.write(proc.stderr)
    if proc.returncode != 0:
        sys.stderr.write(f"candidate entry point exited with {proc.returncode}\n")
        return 1

    solutions_path = Path(workdir, "solutions.json")
    if not solutions_path.is_file():
        sys.stderr.write("candidate wrote no solutions.json\n")
        return 1
    try:
        solutions = load_solutions(solutions_path)
        score, metrics = score_packings(solutions)
    except Exception as exc:
        sys.stderr.write(f"scoring failed: {exc}\n")
        return 1

    Path(metrics_out).write_text(json.dumps(metrics), encoding="utf-8")
    print(f"score: {score:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
