"""Tables and charts summarizing a completed run.

Everything is written under ``<out>/report/``: CSV tables, a JSONL
decision log and a few PNG charts. The file set and contents depend only on
the run's artifacts.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evidence import ScoredClaim  # noqa: E402
from .kgraph import stratum  # noqa: E402
from .pipeline import Run  # noqa: E402

logger = logging.getLogger(__name__)

NPS_BINS = np.linspace(0.0, 1.0, 11)
_PNG_META = {"Software": None}


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in r])
    return path


def nps_histogram(values: Sequence[float]) -> np.ndarray:
    """Counts over ten equal bins of [0, 1]; the last bin is closed."""
    counts, _ = np.histogram(np.clip(np.asarray(values, dtype=float), 0.0, 1.0), bins=NPS_BINS)
    return counts


def cluster_summary(run: Run, out: Path) -> Path:
    model, mixtures = run.clusters(), {m.cluster_id: m for m in run.mixtures()}
    sil = model.silhouette
    rows = []
    for k, size in enumerate(model.sizes()):
        mix = mixtures[k]
        order = sorted(range(len(mix.names)), key=lambda i: (-mix.omega[i], i))
        top = ";".join(f"{mix.names[i]}={mix.omega[i]:.3f}" for i in order[:3])
        rows.append([k, size, "" if sil is None else float(sil), top])
    return _write_csv(out / "cluster_summary.csv", ["cluster", "size", "silhouette", "top_standard_phenotypes"], rows)


def edge_tables(run: Run, out: Path) -> list[Path]:
    paths = []
    for k, g in sorted(run.graphs().items()):
        edges = sorted(g.edges, key=lambda e: (-abs(e[2]), e[0], e[1]))
        paths.append(_write_csv(out / f"edges_cluster_{k}.csv", ["source", "target", "weight"], edges))
    return paths


def nps_table(run: Run, out: Path) -> tuple[Path, dict[int, np.ndarray]]:
    hyps = {h.id: h for h in run.hypotheses()}
    by_cluster: dict[int, list[float]] = {}
    for b in run.nps():
        by_cluster.setdefault(hyps[b.hypothesis_id].cluster_id, []).append(b.nps)
    hists = {k: nps_histogram(v) for k, v in sorted(by_cluster.items())}
    rows = [
        [k, float(NPS_BINS[i]), float(NPS_BINS[i + 1]), int(c)]
        for k, counts in hists.items()
        for i, c in enumerate(counts)
    ]
    return _write_csv(out / "nps_histogram.csv", ["cluster", "bin_low", "bin_high", "count"], rows), hists


def pareto_table(run: Run, out: Path) -> tuple[Path, list[dict]]:
    pareto = run.read_json("expand", "pareto.json")
    tau_c = run.cfg.scores.tau_c
    rows = []
    for d in pareto["front"]:
        c = d["claim"]
        sc = ScoredClaim.from_dict(d)
        rows.append([c["claim_id"], c["subject"], c["relation"], c["object"], sc.R, sc.Y, sc.nps, stratum(sc), sc.Y >= tau_c])
    rows.sort(key=lambda r: r[0])
    header = ["claim_id", "subject", "relation", "object", "R", "Y", "nps", "stratum", "selected"]
    return _write_csv(out / "pareto_front.csv", header, rows), pareto["front"]


def decision_log(run: Run, out: Path) -> Path:
    """One record per document-retention and claim-selection decision, plus any online decisions."""
    w = run.cfg.scores
    front_ids = {d["claim"]["claim_id"] for d in run.read_json("expand", "pareto.json")["front"]}
    lines = []
    for r in run.retrieval():
        for d in r.documents:
            lines.append({
                "kind": "document",
                "hypothesis_id": r.hypothesis_id,
                "doc_id": d.doc_id,
                "match_score": d.match_score,
                "retained": d.match_score >= w.tau_d,
            })
    for sc in run.scored_claims():
        on_front = sc.claim.claim_id in front_ids
        lines.append({
            "kind": "claim",
            "claim_id": sc.claim.claim_id,
            "objectives": list(sc.objectives),
            "on_front": on_front,
            "selected": on_front and sc.Y >= w.tau_c,
        })
    online = run.out / "online" / "decisions.jsonl"
    if online.exists():
        for line in online.read_text(encoding="utf-8").splitlines():
            if line.strip():
                lines.append({"kind": "online", **json.loads(line)})
    path = out / "decisions.jsonl"
    path.write_text("".join(json.dumps(x, sort_keys=True) + "\n" for x in lines), encoding="utf-8")
    return path


def _save(fig: plt.Figure, path: Path) -> Path:
    fig.savefig(path, format="png", dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def charts(run: Run, out: Path, hists: dict[int, np.ndarray], front: list[dict]) -> list[Path]:
    model = run.clusters()
    paths = []

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(range(model.K), model.sizes(), color="#4c72b0")
    ax.set_xlabel("phenotype")
    ax.set_ylabel("states")
    ax.set_title("Phenotype sizes")
    paths.append(_save(fig, out / "cluster_sizes.png"))

    fig, ax = plt.subplots(figsize=(6, 3.5))
    centers = (NPS_BINS[:-1] + NPS_BINS[1:]) / 2
    width = 0.1 / max(1, len(hists))
    for j, (k, counts) in enumerate(hists.items()):
        ax.bar(centers - 0.05 + (j + 0.5) * width, counts, width=width, label=f"phenotype {k}")
    ax.set_xlabel("NPS")
    ax.set_ylabel("hypotheses")
    ax.set_title("Novelty-plausibility by phenotype")
    if hists:
        ax.legend(fontsize=7)
    paths.append(_save(fig, out / "nps_distribution.png"))

    fig, ax = plt.subplots(figsize=(5, 4))
    claims = run.scored_claims()
    if claims:
        F = np.array([c.objectives for c in claims])
        ax.scatter(F[:, 0], F[:, 1], c="#bbbbbb", s=10, label="candidates")
    if front:
        P = np.array([[d["R"], d["Y"], d["nps"]] for d in front])
        sc = ax.scatter(P[:, 0], P[:, 1], c=P[:, 2], cmap="viridis", vmin=0, vmax=1, s=30, label="Pareto front")
        fig.colorbar(sc, ax=ax, label="NPS")
    ax.axhline(run.cfg.scores.tau_c, color="k", lw=0.8, ls="--")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("relevance R")
    ax.set_ylabel("validation Y")
    ax.set_title("Claims in objective space")
    paths.append(_save(fig, out / "pareto_front.png"))
    return paths


def write_report(run: Run) -> list[Path]:
    """Write every report file for the run in ``run.out``.

    Raises:
        MissingArtifact: a stage artifact the report needs is absent.
    """
    out = run.out / "report"
    out.mkdir(parents=True, exist_ok=True)
    for old in out.iterdir():
        if old.is_file():
            old.unlink()
    paths = [cluster_summary(run, out)]
    paths += edge_tables(run, out)
    p, hists = nps_table(run, out)
    paths.append(p)
    p, front = pareto_table(run, out)
    paths.append(p)
    paths.append(decision_log(run, out))
    paths += charts(run, out, hists, front)
    logger.info("report: %d files in %s", len(paths), out)
    return paths
