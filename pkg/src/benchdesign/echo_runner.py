"""Scripted external solver used to exercise the runner protocol.

    python -m benchdesign.echo_runner SCRIPT ALGORITHM INSTANCE SEED

``SCRIPT`` is a JSON file mapping ``"ALGORITHM/INSTANCE"`` to a list of
values; the run prints a few log lines and then the result line carrying
``values[seed % len(values)]``. Special string entries trigger failures:
``"fail"`` exits with status 3, ``"garbage"`` prints no result line and
``"sleep:SECONDS"`` sleeps before answering.
"""
import json
import sys
import time


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 4:
        print(__doc__, file=sys.stderr)
        return 2
    script, algorithm, instance, seed = argv
    with open(script) as fh:
        table = json.load(fh)
    values = table[f"{algorithm}/{instance}"]
    entry = values[int(seed) % len(values)]
    print(f"echo-runner: algorithm={algorithm} instance={instance} seed={seed}")
    print("iteration 1 best 1e9")
    if entry == "fail":
        print("boom", file=sys.stderr)
        return 3
    if entry == "garbage":
        print("value: not a json line")
        return 0
    if isinstance(entry, str) and entry.startswith("sleep:"):
        time.sleep(float(entry.split(":", 1)[1]))
        entry = 1.0
    print(json.dumps({"value": entry, "diagnostics": f"seed {seed}"}))
    print("done")
    return 0


if __name__ == "__main__":
    sys.exit(main())
