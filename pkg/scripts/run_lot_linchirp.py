"""LOT streaming vs block DCT on LinChirp, R in {2, 4, 8}, five trials.

Extra arguments are passed to ``l1stream run`` (e.g. ``--full-scale``).
"""
import sys

from l1stream.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "--pipeline", "lot", "--signal", "LinChirp", "--R", "2,4,8",
                   "--trials", "5", "--baselines", "dct", "--out", "results/lot_linchirp",
                   *sys.argv[1:]]))
