"""Stage orchestration, on-disk artifacts and the run manifest.

Each stage reads the artifacts of earlier stages from the output directory
and writes its own under ``<out>/<stage>/``. ``manifest.json`` records a
checksum for every artifact, so a resumed run can skip stages whose outputs
are intact.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import __version__, kernels
from .backends import FixtureTransport, HttpTransport, LLMBackend, RecordingTransport, Transport
from .causal import CausalGraph, fit_notears
from .config import PipelineConfig
from .embed import EncoderParams, encode_corpus, make_encoder_params, stack
from .errors import (
    BackendUnavailable,
    DegenerateInput,
    MissingArtifact,
    PhenoKGError,
    StageError,
    ValidationError,
)
from .evidence import (
    Document,
    EutilsClient,
    RetrievalResult,
    ScoredClaim,
    extract_claims,
    merge_claims,
    relevance,
    retrieve,
    score_documents,
    validation,
)
from .hypothesis import Hypothesis, HypothesisConfig, NPSBreakdown, generate_hypotheses, score_batch
from .ingest import EdgeTemplate, EncodedMatrix, build_edge_template, build_state_graphs, encode, load_dataset
from .kgraph import KnowledgeGraph, base_graph, expand, export_graphml, load, pareto_front, persist
from .online import (
    AnomalyDetector,
    CandidateBuffer,
    CandidatePhenotype,
    MatchModel,
    buffer_candidate,
    build_match_model,
    decide,
    is_novel,
    make_state,
    score_state,
)
from .phenotype import (
    ClusterConfig,
    ClusterModel,
    PhenotypeState,
    SPMixture,
    dominant_features,
    fit_clusters,
    map_to_standard,
    phenotype_state,
    soft_assign,
    standard_phenotypes_from_config,
)
from .probnet import BayesNet, Discretization, fit_bn, fit_discretization, markov_blanket
from .synthetic import SyntheticLiterature
from .text import EntityLinker

logger = logging.getLogger(__name__)

STAGES = ("ingest", "cluster", "causal", "bn", "hypothesize", "retrieve", "score", "expand")


def derive_seed(root: int, stage: str) -> int:
    """Stable per-stage seed from the root seed."""
    digest = hashlib.sha256(f"{root}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path: Path, obj: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(obj), encoding="utf-8")
    return path


def write_npy(path: Path, arr: np.ndarray) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, np.ascontiguousarray(arr), allow_pickle=False)
    return path


def make_transport(cfg: PipelineConfig, record: Path | None = None) -> Transport:
    """Transport for ``cfg.backend.mode``, optionally recording every response."""
    mode = cfg.backend.mode
    if mode == "fixtures":
        if cfg.backend.fixtures is None:
            raise ValidationError("backend.fixtures: required in fixtures mode")
        try:
            inner: Transport = FixtureTransport(cfg.backend.fixtures)
        except BackendUnavailable as exc:
            raise ValidationError(f"backend.fixtures: {exc}") from exc
    elif mode == "synthetic":
        inner = SyntheticLiterature(cfg.aliases, seed=cfg.seed)
    else:
        inner = HttpTransport(cfg.backend.eutils_base, cfg.backend.llm_endpoint, cfg.backend.cache_dir)
    return RecordingTransport(inner, record) if record is not None else inner


@dataclass
class RunManifest:
    config_hash: str
    input_hashes: dict[str, str]
    versions: dict[str, str]
    seeds: dict[str, int]
    stages: dict[str, dict] = field(default_factory=dict)

    def artifacts(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for name in STAGES + ("report",):
            out.update(self.stages.get(name, {}).get("artifacts", {}))
        return dict(sorted(out.items()))

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "input_hashes": self.input_hashes,
            "versions": self.versions,
            "seeds": self.seeds,
            "stages": self.stages,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunManifest:
        return cls(d["config_hash"], dict(d["input_hashes"]), dict(d["versions"]), dict(d["seeds"]), dict(d.get("stages", {})))


def versions() -> dict[str, str]:
    import scipy
    import sklearn

    return {
        "phenokg": __version__,
        "kernels": kernels.BACKEND,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "python": platform.python_version(),
    }


class Run:
    """Artifact access for one output directory."""

    def __init__(self, cfg: PipelineConfig, out: Path | None = None, transport: Transport | None = None) -> None:
        self.cfg = cfg
        self.out = Path(out or cfg.output_dir)
        self._transport = transport
        self._cache: dict[str, Any] = {}

    # paths and bookkeeping

    def path(self, stage: str, name: str) -> Path:
        return self.out / stage / name

    def require(self, stage: str, name: str) -> Path:
        p = self.path(stage, name)
        if not p.exists():
            raise MissingArtifact(str(p))
        return p

    def read_json(self, stage: str, name: str) -> Any:
        return json.loads(self.require(stage, name).read_text(encoding="utf-8"))

    @property
    def manifest_path(self) -> Path:
        return self.out / "manifest.json"

    def new_manifest(self) -> RunManifest:
        seeds = {s: derive_seed(self.cfg.seed, s) for s in ("embed", "cluster", "online")}
        inputs = {"data": sha256_file(self.cfg.data_path)} if self.cfg.data_path.exists() else {}
        return RunManifest(self.cfg.digest(), inputs, versions(), seeds)

    def load_manifest(self) -> RunManifest | None:
        if not self.manifest_path.exists():
            return None
        try:
            return RunManifest.from_dict(json.loads(self.manifest_path.read_text(encoding="utf-8")))
        except (json.JSONDecodeError, KeyError, TypeError):
            logger.warning("unreadable manifest at %s; starting fresh", self.manifest_path)
            return None

    def save_manifest(self, man: RunManifest) -> None:
        write_json(self.manifest_path, man.to_dict())

    def stage_intact(self, man: RunManifest, stage: str) -> bool:
        entry = man.stages.get(stage)
        if not entry or not entry.get("completed"):
            return False
        for rel, digest in entry.get("artifacts", {}).items():
            p = self.out / rel
            if not p.exists() or sha256_file(p) != digest:
                return False
        return True

    def checksums(self, paths: Iterable[Path]) -> dict[str, str]:
        return {p.relative_to(self.out).as_posix(): sha256_file(p) for p in sorted(paths)}

    # backends

    @property
    def transport(self) -> Transport:
        if self._transport is None:
            self._transport = make_transport(self.cfg)
        return self._transport

    def llm(self) -> LLMBackend:
        return LLMBackend(self.transport)

    # loaders

    def _memo(self, key: str, fn: Callable[[], Any]) -> Any:
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def encoded(self) -> EncodedMatrix:
        return self._memo(
            "encoded",
            lambda: EncodedMatrix.from_dict(self.read_json("ingest", "encoded.json"), np.load(self.require("ingest", "encoded.npy"))),
        )

    def template(self) -> EdgeTemplate:
        return self._memo("template", lambda: EdgeTemplate.from_dict(self.read_json("ingest", "template.json")))

    def encoder(self) -> EncoderParams:
        def build() -> EncoderParams:
            d = self.read_json("cluster", "encoder.json")
            return make_encoder_params(d["f"], d["h"], d["rounds"], d["seed"], d["activation"], d["node_map"])

        return self._memo("encoder", build)

    def embeddings(self) -> np.ndarray:
        return self._memo("embeddings", lambda: np.load(self.require("cluster", "embeddings.npy")))

    def clusters(self) -> ClusterModel:
        return self._memo("clusters", lambda: ClusterModel.from_dict(self.read_json("cluster", "clusters.json")))

    def mixtures(self) -> list[SPMixture]:
        return self._memo("mixtures", lambda: [SPMixture.from_dict(d) for d in self.read_json("cluster", "sp_mixtures.json")])

    def graphs(self) -> dict[int, CausalGraph]:
        return self._memo(
            "graphs", lambda: {int(d["cluster_id"]): CausalGraph.from_dict(d) for d in self.read_json("causal", "graphs.json")}
        )

    def networks(self) -> dict[int, BayesNet]:
        return self._memo(
            "networks", lambda: {int(d["bn"]["cluster_id"]): BayesNet.from_dict(d["bn"]) for d in self.read_json("bn", "networks.json")}
        )

    def states(self) -> list[PhenotypeState]:
        return self._memo("states", lambda: [PhenotypeState.from_dict(d) for d in self.read_json("hypothesize", "phenotype_states.json")])

    def hypotheses(self) -> list[Hypothesis]:
        return self._memo("hypotheses", lambda: [Hypothesis.from_dict(d) for d in self.read_json("hypothesize", "hypotheses.json")])

    def retrieval(self) -> list[RetrievalResult]:
        def build() -> list[RetrievalResult]:
            return [
                RetrievalResult(
                    r["hypothesis_id"], r["query"], int(r["count"]), [Document.from_dict(x) for x in r["documents"]],
                    float(r["lit_support"]), int(r["skipped"]),
                )
                for r in self.read_json("retrieve", "retrieval.json")
            ]

        return self._memo("retrieval", build)

    def nps(self) -> list[NPSBreakdown]:
        return self._memo("nps", lambda: [NPSBreakdown.from_dict(d) for d in self.read_json("score", "nps.json")])

    def scored_claims(self) -> list[ScoredClaim]:
        return self._memo("scored", lambda: [ScoredClaim.from_dict(d) for d in self.read_json("score", "scored_claims.json")])

    def linker(self) -> EntityLinker:
        return self._memo("linker", lambda: EntityLinker(self.encoded().column_names, self.cfg.aliases))

    def invalidate(self) -> None:
        self._cache.clear()


# stages


def _clear(stage_dir: Path) -> None:
    if stage_dir.exists():
        shutil.rmtree(stage_dir)
    stage_dir.mkdir(parents=True)


def stage_ingest(run: Run) -> list[Path]:
    cfg = run.cfg
    ds = load_dataset(cfg.data_path, cfg.features)
    m = encode(ds)
    t = build_edge_template(m, cfg.embed.corr_threshold)
    logger.info("ingest: %d states, %d modeled features, %d template edges", m.n, m.f, len(t.pairs))
    return [
        write_npy(run.path("ingest", "encoded.npy"), m.values),
        write_json(run.path("ingest", "encoded.json"), m.to_dict()),
        write_json(run.path("ingest", "template.json"), t.to_dict()),
    ]


def stage_cluster(run: Run) -> list[Path]:
    cfg = run.cfg
    m, t = run.encoded(), run.template()
    e = cfg.embed
    seed = derive_seed(cfg.seed, "embed")
    params = make_encoder_params(m.f, e.h, e.rounds, seed, e.activation, e.node_map)
    Z = stack(encode_corpus(build_state_graphs(m, t), params))
    c = cfg.cluster
    ccfg = ClusterConfig(c.knn, c.k_min, c.k_max, c.K, derive_seed(cfg.seed, "cluster"), c.n_init)
    model = fit_clusters(Z, ccfg)
    sps = standard_phenotypes_from_config(cfg.standard_phenotypes, m.column_names)
    mixtures = map_to_standard(model, m, sps, cfg.sp_temperature)
    pi = np.vstack([soft_assign(z, model).pi for z in Z])
    logger.info("cluster: K=%d sizes=%s silhouette=%s", model.K, model.sizes(), model.silhouette)
    enc = {"f": m.f, "h": e.h, "rounds": e.rounds, "seed": seed, "activation": e.activation, "node_map": e.node_map}
    return [
        write_npy(run.path("cluster", "embeddings.npy"), Z),
        write_npy(run.path("cluster", "soft_assignments.npy"), pi),
        write_json(run.path("cluster", "encoder.json"), enc),
        write_json(run.path("cluster", "clusters.json"), model.to_dict()),
        write_json(run.path("cluster", "sp_mixtures.json"), [x.to_dict() for x in mixtures]),
    ]


def fit_cluster_graph(X: np.ndarray, features: Sequence[str], cluster_id: int, cfg: PipelineConfig) -> CausalGraph:
    """NOTEARS on the members of one phenotype, standardized within it.

    Columns constant inside the phenotype carry no signal there; they are
    left out of the fit and come back as isolated nodes.
    """
    d = len(features)
    sd = X.std(axis=0)
    keep = np.flatnonzero(sd > 0)
    W = np.zeros((d, d))
    raw = np.zeros((d, d))
    if len(keep) < 2 or X.shape[0] < 2:
        logger.warning("phenotype %d: too little variation for structure learning", cluster_id)
        return CausalGraph(cluster_id, list(features), W, raw, 0.0, False)
    if len(keep) < d:
        logger.info("phenotype %d: %d constant columns left out", cluster_id, d - len(keep))
    Xk = (X[:, keep] - X[:, keep].mean(axis=0)) / sd[keep]
    try:
        g = fit_notears(Xk, cfg.notears, [features[i] for i in keep], cluster_id)
    except DegenerateInput as exc:
        logger.warning("phenotype %d: %s", cluster_id, exc)
        return CausalGraph(cluster_id, list(features), W, raw, 0.0, False)
    W[np.ix_(keep, keep)] = g.W
    raw[np.ix_(keep, keep)] = g.raw_W
    return CausalGraph(cluster_id, list(features), W, raw, g.h_final, g.converged)


def stage_causal(run: Run) -> list[Path]:
    m, model = run.encoded(), run.clusters()
    graphs = []
    for k in range(model.K):
        g = fit_cluster_graph(m.values[model.members(k)], m.column_names, k, run.cfg)
        logger.info("causal: phenotype %d has %d edges (h=%.2e)", k, len(g.edges), g.h_final)
        graphs.append(g.to_dict())
    return [write_json(run.path("causal", "graphs.json"), graphs)]


def stage_bn(run: Run) -> list[Path]:
    m, model, graphs = run.encoded(), run.clusters(), run.graphs()
    b = run.cfg.bn
    out = []
    for k in range(model.K):
        X = m.values[model.members(k)]
        disc = fit_discretization(X, m.column_names, m.kinds, b.n_bins)
        bn = fit_bn(X, graphs[k], disc, b.alpha, b.max_parents)
        out.append({"discretization": disc.to_dict(), "bn": bn.to_dict()})
    return [write_json(run.path("bn", "networks.json"), out)]


def _hyp_config(cfg: PipelineConfig, cap: int | None = None) -> HypothesisConfig:
    return HypothesisConfig(cap or cfg.max_hypotheses, cfg.nps)


def stage_hypothesize(run: Run) -> list[Path]:
    cfg = run.cfg
    m, model, mixtures = run.encoded(), run.clusters(), run.mixtures()
    graphs, bns = run.graphs(), run.networks()
    all_graphs = [graphs[k] for k in sorted(graphs)]
    backend = run.llm() if cfg.hypothesis_backend == "llm" else None
    states, hyps = [], []
    for mix in sorted(mixtures, key=lambda x: x.cluster_id):
        k = mix.cluster_id
        ps = phenotype_state(model, m, mix, graphs[k])
        states.append(ps)
        hyps.extend(generate_hypotheses(ps, graphs[k], bns[k], all_graphs, _hyp_config(cfg), backend, run.linker()))
    logger.info("hypothesize: %d hypotheses over %d phenotypes", len(hyps), len(states))
    return [
        write_json(run.path("hypothesize", "phenotype_states.json"), [s.to_dict() for s in states]),
        write_json(run.path("hypothesize", "hypotheses.json"), [h.to_dict() for h in hyps]),
    ]


def retrieve_all(hyps: Sequence[Hypothesis], transport: Transport, limit: int, cfg: PipelineConfig) -> list[RetrievalResult]:
    """Concurrent retrieval, one task per hypothesis; results keep input order."""
    client = EutilsClient(transport)
    w = cfg.scores

    def one(h: Hypothesis) -> RetrievalResult:
        r = retrieve(h, client, limit, w)
        r.documents = score_documents(r.documents, h, w)
        return r

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(one, hyps))


def _retrieval_dict(r: RetrievalResult) -> dict:
    return {
        "hypothesis_id": r.hypothesis_id,
        "query": r.query,
        "count": r.count,
        "lit_support": r.lit_support,
        "skipped": r.skipped,
        "documents": [d.to_dict() for d in r.documents],
    }


def stage_retrieve(run: Run) -> list[Path]:
    results = retrieve_all(run.hypotheses(), run.transport, run.cfg.docs_per_hypothesis, run.cfg)
    n_docs = sum(len(r.documents) for r in results)
    logger.info("retrieve: %d documents for %d hypotheses", n_docs, len(results))
    return [write_json(run.path("retrieve", "retrieval.json"), [_retrieval_dict(r) for r in results])]


def score_claims(
    hyps: Sequence[Hypothesis],
    results: Mapping[str, RetrievalResult],
    states: Mapping[int, PhenotypeState],
    graphs: Mapping[int, CausalGraph],
    bns: Mapping[int, BayesNet],
    nps: Mapping[str, float],
    backend: LLMBackend,
    linker: EntityLinker,
    cfg: PipelineConfig,
) -> tuple[list[dict], list[ScoredClaim]]:
    """Extract claims from each hypothesis' retained documents and score them.

    Returns the raw claim records (in hypothesis order) and the merged,
    scored claims.
    """
    w = cfg.scores

    def one(h: Hypothesis) -> list[tuple[ScoredClaim, dict]]:
        k = h.cluster_id
        ps, cg, bn = states[k], graphs[k], bns[k]
        mb = {f: sorted(markov_blanket(bn, f)) for f in bn.features}
        out = []
        for d in results[h.id].documents:
            if d.match_score < w.tau_d:
                continue
            for c in extract_claims(d, h, ps, cg, mb, backend, linker):
                sc = ScoredClaim(c, relevance(c, d, ps, w), validation(c, cg, bn, w), float(nps[h.id]), [h.id])
                out.append((sc, sc.to_dict()))
        return out

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        per_h = list(pool.map(one, hyps))
    flat = [x for batch in per_h for x in batch]
    return [d for _, d in flat], merge_claims(sc for sc, _ in flat)


def stage_score(run: Run) -> list[Path]:
    cfg = run.cfg
    hyps, graphs, bns = run.hypotheses(), run.graphs(), run.networks()
    results = {r.hypothesis_id: r for r in run.retrieval()}
    lit = {hid: r.lit_support for hid, r in results.items()}
    breakdown = score_batch(hyps, graphs, bns, lit, cfg.nps)
    nps = {b.hypothesis_id: b.nps for b in breakdown}
    states = {s.cluster_id: s for s in run.states()}
    raw, merged = score_claims(hyps, results, states, graphs, bns, nps, run.llm(), run.linker(), cfg)
    logger.info("score: %d claims extracted, %d after merging", len(raw), len(merged))
    return [
        write_json(run.path("score", "nps.json"), [b.to_dict() for b in breakdown]),
        write_json(run.path("score", "claims.json"), raw),
        write_json(run.path("score", "scored_claims.json"), [sc.to_dict() for sc in merged]),
    ]


def stage_expand(run: Run) -> list[Path]:
    cfg = run.cfg
    stage_dir = run.out / "expand"
    # the change log is append-only, so a rerun starts from an empty directory
    _clear(stage_dir)
    m = run.encoded()
    hyps = run.hypotheses()
    nps = {b.hypothesis_id: b.nps for b in run.nps()}
    front = pareto_front(run.scored_claims())
    g = base_graph(m.column_names, run.states(), run.mixtures(), run.graphs(), hyps, nps)
    kg = stage_dir / "kg.jsonl"
    persist(g, kg)
    shutil.copyfile(kg, stage_dir / "kg_base.jsonl")
    docs = {r.hypothesis_id: r.documents for r in run.retrieval()}
    expand(g, front, docs, cfg.scores)
    persist(g, kg)
    export_graphml(g, stage_dir / "kg.graphml")
    pareto = {
        "candidates": len(front.candidates),
        "front": [sc.to_dict() for sc in front.front],
        "dominated_by": front.dominated_by,
    }
    logger.info("expand: front %d of %d claims; graph v%d %s", len(front.front), len(front.candidates), g.version, g.counts())
    return [
        write_json(stage_dir / "pareto.json", pareto),
        stage_dir / "kg_base.jsonl",
        kg,
        stage_dir / "kg.jsonl.changes.jsonl",
        stage_dir / "kg.graphml",
    ]


STAGE_FUNCS: dict[str, Callable[[Run], list[Path]]] = {
    "ingest": stage_ingest,
    "cluster": stage_cluster,
    "causal": stage_causal,
    "bn": stage_bn,
    "hypothesize": stage_hypothesize,
    "retrieve": stage_retrieve,
    "score": stage_score,
    "expand": stage_expand,
}


def run_stage(run: Run, stage: str, man: RunManifest | None = None) -> RunManifest:
    """Run one stage, record its artifacts, and save the manifest.

    Raises:
        ValidationError: bad configuration or input.
        StageError: anything else that stops the stage.
    """
    man = man or run.load_manifest() or run.new_manifest()
    if man.config_hash != run.cfg.digest():
        logger.info("configuration changed since the last run; manifest reset")
        man = run.new_manifest()
    man.stages[stage] = {"completed": False}
    t0 = time.perf_counter()
    try:
        paths = STAGE_FUNCS[stage](run)
    except ValidationError:
        raise
    except MissingArtifact as exc:
        run.save_manifest(man)
        raise MissingArtifact(exc.path, stage) from exc
    except StageError:
        run.save_manifest(man)
        raise
    except (PhenoKGError, ValueError, np.linalg.LinAlgError, OSError) as exc:
        run.save_manifest(man)
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
    # later stages depend on this one
    for later in STAGES[STAGES.index(stage) + 1:]:
        man.stages.pop(later, None)
    man.stages[stage] = {
        "completed": True,
        "seconds": round(time.perf_counter() - t0, 3),
        "artifacts": run.checksums(paths),
    }
    run.save_manifest(man)
    run.invalidate()
    return man


def run_pipeline(cfg: PipelineConfig, resume: bool = False, transport: Transport | None = None, out: Path | None = None) -> RunManifest:
    """Run every stage in order; with ``resume``, skip stages whose artifacts are intact."""
    run = Run(cfg, out, transport)
    run.out.mkdir(parents=True, exist_ok=True)
    man = run.load_manifest() if resume else None
    if man is not None and man.config_hash != cfg.digest():
        logger.info("configuration changed; resuming from scratch")
        man = None
    man = man or run.new_manifest()
    dirty = False
    for stage in STAGES:
        if resume and not dirty and run.stage_intact(man, stage):
            logger.info("%s: artifacts intact, skipped", stage)
            continue
        dirty = True
        logger.info("%s: running", stage)
        man = run_stage(run, stage, man)
    return man


# online path


@dataclass
class OnlineContext:
    run: Run
    model: MatchModel
    detector: AnomalyDetector
    buffer: CandidateBuffer

    @property
    def buffer_path(self) -> Path:
        return self.run.out / "online" / "buffer.json"

    def save_buffer(self) -> Path:
        return write_json(self.buffer_path, self.buffer.to_dict())


def online_context(run: Run) -> OnlineContext:
    Z = run.embeddings()
    model = build_match_model(run.clusters(), run.mixtures(), Z)
    detector = AnomalyDetector(run.cfg.online, derive_seed(run.cfg.seed, "online")).fit(Z)
    p = run.out / "online" / "buffer.json"
    if p.exists():
        buffer = CandidateBuffer.from_dict(json.loads(p.read_text(encoding="utf-8")))
    else:
        buffer = CandidateBuffer(center=model.z_center.copy())
    return OnlineContext(run, model, detector, buffer)


def _nearest_phenotype(ctx: OnlineContext, cand: CandidatePhenotype) -> int:
    c = ctx.model.z_center
    v = cand.centroid - c
    best, best_cos = 0, -np.inf
    for k, mu in enumerate(ctx.model.clusters.centroids):
        u = mu - c
        den = np.linalg.norm(u) * np.linalg.norm(v)
        cs = float(u @ v / den) if den > 0 else 0.0
        if cs > best_cos:
            best, best_cos = k, cs
    return best


def promote(ctx: OnlineContext, cand: CandidatePhenotype) -> dict:
    """Accelerated pipeline for a promoted candidate.

    The new phenotype borrows the causal graph and Bayesian network of the
    nearest stable phenotype, gets a capped set of hypotheses and documents,
    and every node it adds to the graph is flagged exploratory.
    """
    run, cfg = ctx.run, ctx.run.cfg
    o = cfg.online
    m = run.encoded()
    base_k = _nearest_phenotype(ctx, cand)
    new_k = ctx.model.K + cand.candidate_id
    borrowed = run.graphs()[base_k]
    cg = CausalGraph(new_k, list(borrowed.features), borrowed.W.copy(), borrowed.raw_W.copy(), borrowed.h_final, borrowed.converged)
    bn = run.networks()[base_k]
    names = run.mixtures()[0].names
    mix = SPMixture(new_k, list(names), cand.sp.copy(), np.zeros(len(names)), cfg.sp_temperature)
    profile = cand.profile if cand.profile is not None else np.zeros(m.f)
    edges = sorted(cg.edges, key=lambda e: (-abs(e[2]), e[0], e[1]))[:5]
    ps = PhenotypeState(new_k, dominant_features(profile, m.column_names), edges, mix.top(2), exploratory=True)

    graphs = dict(run.graphs())
    graphs[new_k] = cg
    bns = dict(run.networks())
    bns[new_k] = bn
    all_graphs = [graphs[k] for k in sorted(graphs)]
    backend = run.llm() if cfg.hypothesis_backend == "llm" else None
    hyps = generate_hypotheses(ps, cg, bn, all_graphs, _hyp_config(cfg, o.max_hypotheses), backend, run.linker())
    results = retrieve_all(hyps, run.transport, o.max_docs, cfg)
    by_id = {r.hypothesis_id: r for r in results}
    breakdown = score_batch(hyps, graphs, bns, {h: r.lit_support for h, r in by_id.items()}, cfg.nps)
    nps = {b.hypothesis_id: b.nps for b in breakdown}
    _, merged = score_claims(hyps, by_id, {new_k: ps}, graphs, bns, nps, run.llm(), run.linker(), cfg)
    front = pareto_front(merged)

    kg_path = run.require("expand", "kg.jsonl")
    g = load(kg_path)
    before = set(g.nodes)
    base_graph(m.column_names, [ps], [mix], {}, hyps, nps, g)
    expand(g, front, {h: r.documents for h, r in by_id.items()}, cfg.scores, exploratory=True)
    persist(g, kg_path)
    added = sorted(set(g.nodes) - before)
    record = {
        "candidate_id": cand.candidate_id,
        "phenotype": new_k,
        "borrowed_from": base_k,
        "hypotheses": [h.id for h in hyps],
        "claims": len(front.front),
        "graph_version": g.version,
        "added_nodes": [list(n) for n in added],
    }
    write_json(run.out / "online" / f"promotion_{cand.candidate_id}.json", record)
    logger.info("candidate %d promoted to phenotype %d (borrowing %d): %d new nodes", cand.candidate_id, new_k, base_k, len(added))
    return record


def read_states(path: Path) -> list[dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as fh:
        return [dict(r) for r in csv.DictReader(fh)]


def match_records(ctx: OnlineContext, records: Sequence[Mapping[str, str]], prefix: str = "s") -> list[dict]:
    """Score, decide and buffer each new state; returns one decision record per state."""
    cfg = ctx.run.cfg.online
    m, t, p = ctx.run.encoded(), ctx.run.template(), ctx.run.encoder()
    out = []
    for i, rec in enumerate(records):
        sid = str(rec.get("state_id") or f"{prefix}{i}")
        s = make_state(sid, rec, m, t, p, ctx.model)
        dec = decide(score_state(s, ctx.model, cfg), cfg)
        ind = int(ctx.detector.indicator(s.z)[0])
        row = {"state_id": sid, **dec.to_dict(), "anomaly_indicator": ind, "novel": is_novel(dec, ind, cfg)}
        if row["novel"]:
            ctx.buffer, promoted = buffer_candidate(s, ctx.buffer, cfg)
            row["candidate_id"] = next(c.candidate_id for c in ctx.buffer.candidates if sid in c.exemplars)
            if promoted is not None:
                row["promotion"] = promote(ctx, promoted)
        out.append(row)
    ctx.save_buffer()
    return out
