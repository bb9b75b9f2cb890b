"""The delayoc command line, driven from Python.

Equivalent shell session:

    delayoc check  demos/problems/lq.json --seed 1
    delayoc oracle demos/problems/lq.json --report oracle.json
    delayoc solve  demos/problems/lq.json --report solve.json --trajectory lq.csv
    delayoc residual demos/problems/lq.json --input lq.csv
    delayoc solve  demos/problems/delayed_quadratic.json --mesh 1/64
"""
# %%
import json
from pathlib import Path

from delayoc.cli import main

here = Path(__file__).parent / "problems"
lq = str(here / "lq.json")

print("exit", main(["check", lq, "--seed", "1"]))
print("exit", main(["oracle", lq, "--report", "oracle.json"]))
print("exit", main(["solve", lq, "--report", "solve.json", "--trajectory", "lq.csv"]))
print("exit", main(["residual", lq, "--input", "lq.csv"]))

# %% Reports are plain JSON with 17-digit floats
solve = json.loads(Path("solve.json").read_text())
oracle = json.loads(Path("oracle.json").read_text())
print({k: solve[k] for k in ("command", "converged", "objective_estimate", "pins_exact")})
print("relative gap to oracle:", abs(solve["objective_estimate"] - oracle["objective"]) / oracle["objective"])

# %% Variational files, with a mesh override
print("exit", main(["solve", str(here / "delayed_quadratic.json"), "--mesh", "1/64"]))

# %% Errors exit with status 1 and a one-line message on stderr
print("exit", main(["solve", "no-such-file.json"]))
