"""Dynamic-model streaming on shifted HeaviSine against LS-Kalman and DWT-only."""
import sys

from l1stream.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "--pipeline", "dynamic", "--signal", "HeaviSine", "--R", "2,4,8",
                   "--trials", "5", "--baselines", "ls-kalman,dwt-only",
                   "--out", "results/dynamic_heavisine", *sys.argv[1:]]))
