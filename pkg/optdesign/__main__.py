# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""Usage:
    {NAME} generate [options]
    {NAME} solve PROBLEM [options]
    {NAME} verify PROBLEM DESIGN [options]
    {NAME} bench [options]
    {NAME} (-h | --help | --version)

Compute optimal designs of experiments with second-order cone programming,
first-order baselines and solver-independent optimality certificates.

Commands:
    generate  Write a seeded instance to a problem file and print its hash.
    solve     Compute a design, write it next to PROBLEM or to --out.
    verify    Certify DESIGN for PROBLEM, exit 1 if a condition fails.
    bench     Sweep instances and methods, print or write a CSV table.

Instance options:
    --family NAME         random, polynomial or network [default: random].
    --seed N              Seed of the instance [default: 0].
    --s N                 Random: number of experiments [default: 10].
    --m N                 Random: number of parameters [default: 2].
    --l N                 Random: rows per experiment [default: 1].
    --r N                 Random: columns of the target [default: 1].
    --degree N            Polynomial: degree [default: 5].
    --grid N              Polynomial: grid points [default: 300].
    --interval LOW,HIGH   Polynomial: interval of the grid [default: 0,3].
    --nodes N             Network: number of routers [default: 6].
    --edges N             Network: number of links [default: 10].
    --traffic KIND        Network: uniform or lognormal [default: uniform].
    --interfaces KIND     Network: links or nodes [default: links].
    --budget FRACTION     Network: sampled share of traffic [default: 0.1].

Solver options:
    -c, --criterion C     c, A, T, D or S [default: c].
    --method M            socp, mult, accel or exchange [default: socp].
    --max-iter N          Iterations of the first-order methods
                          [default: 10000].
    --dump FILE           Write the cone program in plain text.
    --certify             Check the design with its certificate.
    --certificate KIND    elfving, kkt, gap, rank1 or budget, by default
                          the one matching the criterion.
    --tol TOL             Certificate tolerance, else $OPTDESIGN_TOL or 1e-6.

Bench options:
    --sizes LIST          Comma-separated m (random), degrees (polynomial)
                          or node counts (network).
    --per-param N         Random: at least N experiments per parameter
                          [default: 8].
    --methods LIST        Comma-separated methods [default: socp,mult].
    --seeds LIST          Comma-separated seeds, else --seed.
    -j N, --jobs N        Parallel runs [default: 1].

Other options:
    -o FILE, --out FILE   Output file.
    -v, --verbose         Log solver iterations.
    -h, --help            Show this help and exit.
    --version             Show the {DNAME} version and exit.
"""

import logging as log
import sys

import docopt

from . import DISPLAY_NAME, NAME, __version__
from .commands import cmd_bench, cmd_generate, cmd_solve, cmd_verify
from .utils import errors_to_exit

COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def run(argv: list[str] | None = None) -> None:
    doc = (__doc__ or "").format(NAME=NAME, DNAME=DISPLAY_NAME)
    args = docopt.docopt(doc, argv=argv, version=__version__)
    log.basicConfig(
        level = log.DEBUG if args["--verbose"] else log.INFO,
        format = "%(levelname)s %(name)s: %(message)s",
        stream = sys.stderr,
    )

    command = next(name for name in COMMANDS if args[name])
    with errors_to_exit():
        code = COMMANDS[command](args)
    if code:
        raise SystemExit(code)


if __name__ == "__main__":
    run()
