"""Command-line surface: search, classify, verify, reference, report.

Exit codes: 0 on success, 1 when verification failures are present, 2 on
usage errors (argparse's convention).
"""

import argparse
import json
import sys

import numpy as np

from . import __version__
from .classify import classification_report, report_to_json
from .gramspace import PhaseVector, gram_from_phases
from .search import BatchSummary, SearchConfig, batch_search, refine
from .store import Atlas, BatchRecord, format_report_text, report as atlas_report, verify_atlas
from .weyl import fiducial_search, wh_gram


def _build_reference(n: int, seed: int = 0):
    fid = fiducial_search(n, seed=seed, restrict_zauner=True)
    return wh_gram(fid)[0]


def _cmd_search(args) -> int:
    config = SearchConfig(n=args.n, max_iterations=args.max_iter, seed=args.seed)
    atlas = Atlas(args.store)
    reference = None
    if not args.no_reference:
        print(f"building Weyl-Heisenberg reference for n={args.n} ...", file=sys.stderr)
        reference = _build_reference(args.n, seed=args.seed)
    summary = batch_search(
        args.n, args.trials, config=config, store=atlas, reference=reference,
        workers=args.workers,
    )
    atlas.append_batch(
        BatchRecord(
            n=args.n,
            trials=summary.trials,
            converged=summary.converged,
            local_minima=summary.local_minima,
            budget_exhausted=summary.budget_exhausted,
            distinct_islands=summary.distinct_islands,
            matched_to_reference=summary.matched_to_reference,
            master_seed=args.seed,
        )
    )
    if args.refine_digits:
        _refine_stored(atlas, args.refine_digits)
    print(
        f"n={summary.n}: {summary.converged}/{summary.trials} converged, "
        f"{summary.local_minima} local minima, {summary.distinct_islands} islands, "
        f"{summary.matched_to_reference} matched"
    )
    return 0


def _refine_stored(atlas, digits):
    for rec in atlas.records:
        try:
            refined = refine(rec.phase_vector(), target_digits=digits)
        except Exception as exc:  # refinement failure is reported, not fatal
            print(f"refine failed for {rec.island_hash}: {exc}", file=sys.stderr)
            continue
        print(
            f"refined {rec.island_hash} to residual {refined.residual:.2e}",
            file=sys.stderr,
        )


def _cmd_classify(args) -> int:
    reference = None
    if args.reference:
        with open(args.reference) as fh:
            reference = gram_from_phases(PhaseVector.from_json(fh.read()))
    out = open(args.out, "w") if args.out else sys.stdout
    auto_ref_cache = {}
    try:
        with open(args.input) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if obj.get("kind") == "batch":
                    continue
                pv = PhaseVector(int(obj["n"]), np.array([float(p) for p in obj["phases"]]))
                ref = reference
                if ref is None and not args.no_reference:
                    if pv.n not in auto_ref_cache:
                        print(
                            f"building reference for n={pv.n} ...", file=sys.stderr
                        )
                        auto_ref_cache[pv.n] = _build_reference(pv.n)
                    ref = auto_ref_cache[pv.n]
                rep = classification_report(
                    gram_from_phases(pv), reference=ref,
                    with_automorphisms=not args.no_automorphisms,
                )
                out.write(report_to_json(rep) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def _cmd_verify(args) -> int:
    atlas = Atlas(args.store)
    result = verify_atlas(atlas)
    print(json.dumps(result, indent=2))
    return 1 if (result["failures"] or result["unreadable"]) else 0


def _cmd_reference(args) -> int:
    G = _build_reference(args.n, seed=args.seed)
    from .gramspace import phases_of

    text = phases_of(G).to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _cmd_report(args) -> int:
    atlas = Atlas(args.store)
    rep = atlas_report(atlas, args.n)
    if args.format == "json":
        print(json.dumps(rep, indent=2))
    else:
        print(format_report_text(rep))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sicgram",
        description="Construct and classify SIC-POVM Gram matrices",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("search", help="random-restart batch search")
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--trials", type=int, required=True)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--store", required=True, help="atlas JSONL path")
    ps.add_argument("--max-iter", type=int, default=20000)
    ps.add_argument("--refine-digits", type=int, default=0,
                    help="refine stored solutions to this many digits (0 = off)")
    ps.add_argument("--workers", type=int, default=1)
    ps.add_argument("--no-reference", action="store_true",
                    help="skip reference matching")
    ps.set_defaults(func=_cmd_search)

    pc = sub.add_parser("classify", help="classify phase vectors from a JSONL file")
    pc.add_argument("--in", dest="input", required=True)
    pc.add_argument("--out", default=None)
    pc.add_argument("--reference", default=None,
                    help="phase-vector JSON of a reference Gram")
    pc.add_argument("--no-reference", action="store_true")
    pc.add_argument("--no-automorphisms", action="store_true")
    pc.set_defaults(func=_cmd_classify)

    pv = sub.add_parser("verify", help="re-verify every record of an atlas")
    pv.add_argument("--store", required=True)
    pv.set_defaults(func=_cmd_verify)

    pr = sub.add_parser("reference", help="build a Weyl-Heisenberg reference Gram")
    pr.add_argument("--n", type=int, required=True)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=_cmd_reference)

    pp = sub.add_parser("report", help="summarize an atlas for one dimension")
    pp.add_argument("--store", required=True)
    pp.add_argument("--n", type=int, required=True)
    pp.add_argument("--format", choices=("json", "text"), default="text")
    pp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
