"""Append-only solution atlas with island deduplication.

One JSON object per line; solution records carry the phases, residuals and
classification data, batch records carry per-run statistics.  The in-memory
index keyed by (n, island_hash) is rebuilt from the log on load, and a
duplicate verdict always re-checks the full Bargmann tensor, never the hash
alone.
"""

from dataclasses import dataclass, field
from datetime import datetime, timezone
import json
from pathlib import Path

import numpy as np

from . import __version__
from .calculus import value_and_grad
from .classify import (
    bargmann,
    circular_distance,
    classification_report,
    generating_set,
    island_hash,
)
from .gramspace import PhaseVector, gram_from_phases, is_sic_gram

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


@dataclass
class SolutionRecord:
    schema_version: int
    n: int
    phases: list
    residuals: dict  # s, f_err, g_err, grad_norm
    island_hash: str
    gen_set_size: int
    matched_reference: list | None
    aut_summary: dict | None
    provenance: dict
    flags: list = field(default_factory=list)

    def to_json(self) -> str:
        obj = {
            "kind": "solution",
            "schema_version": self.schema_version,
            "n": self.n,
            "phases": [format(p, ".17g") for p in self.phases],
            "residuals": self.residuals,
            "island_hash": self.island_hash,
            "gen_set_size": self.gen_set_size,
            "matched_reference": self.matched_reference,
            "aut_summary": self.aut_summary,
            "provenance": self.provenance,
            "flags": self.flags,
        }
        return json.dumps(obj)

    @classmethod
    def from_obj(cls, obj: dict) -> "SolutionRecord":
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise SchemaError(f"unknown schema_version {obj.get('schema_version')!r}")
        return cls(
            schema_version=obj["schema_version"],
            n=int(obj["n"]),
            phases=[float(p) for p in obj["phases"]],
            residuals=obj["residuals"],
            island_hash=obj["island_hash"],
            gen_set_size=int(obj["gen_set_size"]),
            matched_reference=obj.get("matched_reference"),
            aut_summary=obj.get("aut_summary"),
            provenance=obj.get("provenance", {}),
            flags=list(obj.get("flags", [])),
        )

    def phase_vector(self) -> PhaseVector:
        return PhaseVector(self.n, np.array(self.phases))

    def self_check(self, tol: float = 1e-12) -> list:
        """Residual fields must agree with re-evaluation of the stored phases."""
        problems = []
        f, g, gf, gg = value_and_grad(np.array(self.phases), self.n)
        s = (f - self.n) ** 2 + (g - self.n) ** 2
        grad_norm = max(np.abs(gf).max(), np.abs(gg).max())
        for key, fresh in (
            ("s", s),
            ("f_err", abs(f - self.n)),
            ("g_err", abs(g - self.n)),
            ("grad_norm", grad_norm),
        ):
            if abs(self.residuals[key] - fresh) > tol:
                problems.append(f"residual {key} stored {self.residuals[key]:.3e} vs {fresh:.3e}")
        gen = generating_set(gram_from_phases(self.phase_vector()))
        if island_hash(gen) != self.island_hash:
            problems.append("island_hash does not recompute from phases")
        if gen.size != self.gen_set_size:
            problems.append(f"gen_set_size stored {self.gen_set_size} vs {gen.size}")
        return problems


def build_record(
    pv: PhaseVector,
    reference=None,
    provenance=None,
    island_cache=None,
    with_automorphisms: bool = True,
) -> SolutionRecord:
    """Classify a converged phase vector into a storable record.

    ``island_cache`` (hash -> automorphism dict) lets batches compute the
    automorphism structure once per generating-set class (it is invariant
    under relabeling); the matching permutation is frame-specific and is
    always computed per record.
    """
    n = pv.n
    f, g, gf, gg = value_and_grad(pv.phases, n)
    G = gram_from_phases(pv)
    gen = generating_set(G)
    h = island_hash(gen)
    cached_aut = island_cache.get(h) if island_cache is not None else None
    rep = classification_report(
        G, reference=reference, with_automorphisms=with_automorphisms and cached_aut is None
    )
    if cached_aut is not None:
        rep.update(cached_aut)
    elif island_cache is not None and "aut_group_order" in rep:
        island_cache[h] = {
            k: rep[k] for k in ("aut_group_order", "H_order", "element_order_census")
        }
    prov = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "tool_version": __version__,
    }
    prov.update(provenance or {})
    aut = None
    if "aut_group_order" in rep:
        aut = {"group_order": rep["aut_group_order"], "H_order": rep["H_order"]}
    return SolutionRecord(
        schema_version=SCHEMA_VERSION,
        n=n,
        phases=[float(p) for p in pv.phases],
        residuals={
            "s": float((f - n) ** 2 + (g - n) ** 2),
            "f_err": float(abs(f - n)),
            "g_err": float(abs(g - n)),
            "grad_norm": float(max(np.abs(gf).max(), np.abs(gg).max())),
        },
        island_hash=rep["island_hash"],
        gen_set_size=gen.size,
        matched_reference=rep["permutation"] if rep.get("matched_reference") else None,
        aut_summary=aut,
        provenance=prov,
    )


@dataclass
class BatchRecord:
    n: int
    trials: int
    converged: int
    local_minima: int
    budget_exhausted: int
    distinct_islands: int
    matched_to_reference: int
    master_seed: int

    def to_json(self) -> str:
        obj = {"kind": "batch", "schema_version": SCHEMA_VERSION}
        obj.update(self.__dict__)
        obj["timestamp"] = datetime.now(timezone.utc).isoformat()
        return json.dumps(obj)


class Atlas:
    """Append-only JSONL store indexed by (n, island_hash)."""

    def __init__(self, path):
        self.path = Path(path)
        self.index = {}  # (n, hash) -> first SolutionRecord
        self.records = []
        self.batches = []
        self.unreadable = []
        if self.path.exists():
            self._replay()

    def _replay(self):
        with open(self.path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    if obj.get("kind") == "batch":
                        self.batches.append(obj)
                        continue
                    rec = SolutionRecord.from_obj(obj)
                except (json.JSONDecodeError, KeyError, SchemaError, ValueError) as exc:
                    self.unreadable.append((lineno, str(exc)))
                    continue
                self.records.append(rec)
                self.index.setdefault((rec.n, rec.island_hash), rec)

    def _write_line(self, text: str):
        with open(self.path, "a") as fh:
            fh.write(text + "\n")

    def append(self, record: SolutionRecord) -> str:
        """Append a record; verdict is 'stored', 'duplicate' or 'collision'."""
        key = (record.n, record.island_hash)
        prior = self.index.get(key)
        verdict = "stored"
        if prior is not None:
            t_new = bargmann(gram_from_phases(record.phase_vector()))
            t_old = bargmann(gram_from_phases(prior.phase_vector()))
            if circular_distance(t_new.values, t_old.values).max() <= 1e-6:
                verdict = "duplicate"
                record.flags = sorted(set(record.flags) | {"duplicate"})
            else:
                verdict = "collision"
                record.flags = sorted(set(record.flags) | {"hash_collision"})
        self._write_line(record.to_json())
        self.records.append(record)
        if prior is None:
            self.index[key] = record
        return verdict

    def append_batch(self, batch: BatchRecord):
        self._write_line(batch.to_json())
        self.batches.append(json.loads(batch.to_json()))

    def solutions(self, n=None):
        return [r for r in self.records if n is None or r.n == n]


def verify_atlas(atlas: Atlas) -> dict:
    """Re-run the trace, gradient, null-space and set-size checks on every record."""
    from .calculus import hessian_pair, null_intersection_dim
    from .gramspace import PhaseVector as PV

    failures = []
    for i, rec in enumerate(atlas.records):
        problems = rec.self_check()
        pv = rec.phase_vector()
        G = gram_from_phases(pv)
        if not is_sic_gram(G, 1e-8):
            problems.append("is_sic_gram failed at 1e-8")
        f, g, gf, gg = value_and_grad(pv.phases, rec.n)
        if max(np.abs(gf).max(), np.abs(gg).max()) >= 1e-6:
            problems.append("gradient norms exceed 1e-6")
        expected_dim = 10 if rec.n == 3 else rec.n * rec.n - 1
        report = null_intersection_dim(hessian_pair(pv))
        if report.dim_intersection != expected_dim:
            problems.append(
                f"null-space intersection {report.dim_intersection} != {expected_dim}"
            )
        if problems:
            failures.append({"record": i, "island_hash": rec.island_hash, "problems": problems})
    return {
        "records": len(atlas.records),
        "failures": failures,
        "unreadable": [{"line": ln, "error": err} for ln, err in atlas.unreadable],
    }


def report(atlas: Atlas, n: int) -> dict:
    """Per-dimension summary of the atlas contents."""
    recs = atlas.solutions(n)
    islands = sorted({r.island_hash for r in recs})
    gen_census = {}
    for r in recs:
        gen_census[r.gen_set_size] = gen_census.get(r.gen_set_size, 0) + 1
    aut_orders = sorted(
        {(r.aut_summary["group_order"], r.aut_summary["H_order"]) for r in recs if r.aut_summary}
    )
    matched = sum(1 for r in recs if r.matched_reference is not None)
    batch_stats = [b for b in atlas.batches if b.get("n") == n]
    trials = sum(b.get("trials", 0) for b in batch_stats)
    local_minima = sum(b.get("local_minima", 0) for b in batch_stats)
    return {
        "n": n,
        "solutions": len(recs),
        "distinct_islands": len(islands),
        "matched_fraction": (matched / len(recs)) if recs else None,
        "generating_set_census": gen_census,
        "automorphism_orders": [
            {"group_order": go, "H_order": ho} for go, ho in aut_orders
        ],
        "trials": trials,
        "local_minimum_rate": (local_minima / trials) if trials else None,
    }


def format_report_text(rep: dict) -> str:
    lines = [f"dimension n = {rep['n']}"]
    lines.append(f"  solutions stored:     {rep['solutions']}")
    lines.append(f"  distinct islands:     {rep['distinct_islands']}")
    if rep["matched_fraction"] is not None:
        lines.append(f"  matched to reference: {rep['matched_fraction']:.3f}")
    lines.append(f"  generating-set sizes: {rep['generating_set_census']}")
    for a in rep["automorphism_orders"]:
        lines.append(
            f"  automorphism group:   order {a['group_order']} (H order {a['H_order']})"
        )
    if rep["local_minimum_rate"] is not None:
        lines.append(
            f"  local-minimum rate:   {rep['local_minimum_rate']:.3f} over {rep['trials']} trials"
        )
    return "\n".join(lines)
