"""Pipeline configuration loaded from YAML.

Input paths (data, standard phenotypes, aliases, fixtures) resolve against
the config file's directory; the output directory resolves against the
working directory.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .causal import NotearsConfig
from .errors import ValidationError
from .evidence import DEFAULT_EVIDENCE, ScoreWeights
from .hypothesis import NPSWeights
from .ingest import FeatureDef
from .online import OnlineConfig
from .phenotype import ClusterConfig

BACKEND_MODES = ("fixtures", "live", "synthetic")

DEFAULT_CONFIG = Path(__file__).parent / "data" / "config.yaml"


@dataclass(frozen=True)
class EmbedSettings:
    h: int = 32
    rounds: int = 2
    corr_threshold: float = 0.2
    activation: str = "identity"
    node_map: str = "interaction"


@dataclass(frozen=True)
class BNSettings:
    n_bins: int = 3
    alpha: float = 1.0
    max_parents: int = 4


@dataclass(frozen=True)
class BackendSettings:
    mode: str = "fixtures"
    fixtures: Path | None = None
    eutils_base: str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils"
    llm_endpoint: str | None = None
    cache_dir: Path | None = None


@dataclass
class PipelineConfig:
    seed: int
    data_path: Path
    features: list[FeatureDef]
    standard_phenotypes: list[dict]
    aliases: dict[str, str]
    embed: EmbedSettings
    cluster: ClusterConfig
    sp_temperature: float
    notears: NotearsConfig
    bn: BNSettings
    max_hypotheses: int
    nps: NPSWeights
    hypothesis_backend: str
    scores: ScoreWeights
    docs_per_hypothesis: int
    workers: int
    online: OnlineConfig
    backend: BackendSettings
    output_dir: Path
    source: Path | None = None
    raw: dict = field(default_factory=dict, repr=False)

    def digest(self) -> str:
        """Hash of the effective settings, independent of where the file lives."""
        body = yaml.safe_dump(self.raw, sort_keys=True).encode("utf-8")
        return hashlib.sha256(body).hexdigest()


def _section(raw: Mapping, key: str) -> dict:
    val = raw.get(key) or {}
    if not isinstance(val, Mapping):
        raise ValidationError(f"{key}: expected a mapping")
    return dict(val)


def _pick(section: Mapping, key: str, default: Any, prefix: str, kind: type = float) -> Any:
    v = section.get(key, default)
    if v is None:
        return default
    try:
        return kind(v)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{prefix}.{key}: cannot read {v!r} as {kind.__name__}") from exc


def _group(section: Mapping, key: str, default: tuple, prefix: str) -> tuple:
    v = section.get(key)
    if v is None:
        return default
    if not isinstance(v, (list, tuple)) or len(v) != len(default):
        raise ValidationError(f"{prefix}.{key}: expected a list of {len(default)} numbers")
    try:
        vals = tuple(float(x) for x in v)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{prefix}.{key}: non-numeric weight") from exc
    if any(x < 0 for x in vals):
        raise ValidationError(f"{prefix}.{key}: weights must be nonnegative")
    if abs(sum(vals) - 1.0) > 1e-9:
        raise ValidationError(f"{prefix}.{key}: weights sum to {sum(vals):.6g}, expected 1")
    return vals


def _load_yaml(path: Path) -> Any:
    try:
        with path.open(encoding="utf-8") as fh:
            return yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: invalid YAML ({exc})") from exc


def _resolve(base: Path, p: str | None) -> Path | None:
    if p is None:
        return None
    q = Path(p)
    return q if q.is_absolute() else (base / q)


def from_dict(raw: Mapping, base: Path, output_base: Path | None = None) -> PipelineConfig:
    """Build and validate a config; every failure names the offending key."""
    raw = dict(raw)
    data = _section(raw, "data")
    if "path" not in data:
        raise ValidationError("data.path: missing")
    feats = data.get("features")
    if not feats:
        raise ValidationError("data.features: missing or empty")
    features = [FeatureDef.from_config(f) for f in feats]

    sp_src = raw.get("standard_phenotypes")
    if isinstance(sp_src, str):
        sp_doc = _load_yaml(_resolve(base, sp_src))
        sp_entries = sp_doc.get("standard_phenotypes", []) if isinstance(sp_doc, Mapping) else sp_doc
    else:
        sp_entries = sp_src or []
    if not sp_entries:
        raise ValidationError("standard_phenotypes: no definitions")

    al_src = raw.get("aliases")
    if isinstance(al_src, str):
        al_doc = _load_yaml(_resolve(base, al_src)) or {}
        aliases = al_doc.get("aliases", al_doc) if isinstance(al_doc, Mapping) else {}
    else:
        aliases = dict(al_src or {})

    e = _section(raw, "embed")
    embed = EmbedSettings(
        h=_pick(e, "h", 32, "embed", int),
        rounds=_pick(e, "rounds", 2, "embed", int),
        corr_threshold=_pick(e, "corr_threshold", 0.2, "embed"),
        activation=_pick(e, "activation", "identity", "embed", str),
        node_map=_pick(e, "node_map", "interaction", "embed", str),
    )

    c = _section(raw, "cluster")
    K = c.get("K")
    cluster = ClusterConfig(
        knn=_pick(c, "knn", 15, "cluster", int),
        k_min=_pick(c, "k_min", 2, "cluster", int),
        k_max=_pick(c, "k_max", 10, "cluster", int),
        K=None if K is None else int(K),
        n_init=_pick(c, "n_init", 10, "cluster", int),
    )

    n = _section(raw, "causal")
    try:
        notears = NotearsConfig(
            lambda1=_pick(n, "lambda1", 0.1, "causal"),
            h_tol=_pick(n, "h_tol", 1e-8, "causal"),
            rho_max=_pick(n, "rho_max", 1e16, "causal"),
            inner_max_iter=_pick(n, "inner_max_iter", 100, "causal", int),
            edge_threshold=_pick(n, "edge_threshold", 0.3, "causal"),
            max_outer=_pick(n, "max_outer", 100, "causal", int),
        )
    except ValueError as exc:
        raise ValidationError(f"causal: {exc}") from exc

    b = _section(raw, "bn")
    bn = BNSettings(_pick(b, "n_bins", 3, "bn", int), _pick(b, "alpha", 1.0, "bn"), _pick(b, "max_parents", 4, "bn", int))

    hy = _section(raw, "hypothesis")
    theta = _group(hy, "theta", (1 / 6,) * 6, "hypothesis")
    hyp_backend = _pick(hy, "backend", "template", "hypothesis", str)
    if hyp_backend not in ("template", "llm"):
        raise ValidationError(f"hypothesis.backend: expected template or llm, got {hyp_backend!r}")

    ev = _section(raw, "evidence")
    table = dict(DEFAULT_EVIDENCE)
    table.update({str(k): float(v) for k, v in (ev.get("evidence_strength") or {}).items()})
    ref = ev.get("reference_year")
    scores = ScoreWeights(
        alpha=_group(ev, "alpha", (0.7, 0.3), "evidence"),
        omega=_group(ev, "omega", (0.4, 0.3, 0.3), "evidence"),
        beta=_group(ev, "beta", (0.6, 0.4), "evidence"),
        tau_d=_pick(ev, "tau_d", 0.35, "evidence"),
        tau_c=_pick(ev, "tau_c", 0.4, "evidence"),
        half_life=_pick(ev, "half_life", 5.0, "evidence"),
        lit_cap=_pick(ev, "lit_cap", 50, "evidence", int),
        reference_year=None if ref is None else int(ref),
        evidence=table,
    )

    o = _section(raw, "online")
    online = OnlineConfig(
        alpha=_pick(o, "alpha", 0.6, "online"),
        tau_match=_pick(o, "tau_match", 0.6, "online"),
        tau_anom=_pick(o, "tau_anom", 0.3, "online"),
        tau_nc=_pick(o, "tau_nc", 5, "online", int),
        soft_ratio=_pick(o, "soft_ratio", 0.8, "online"),
        n_trees=_pick(o, "n_trees", 100, "online", int),
        max_samples=_pick(o, "max_samples", 256, "online", int),
        anomaly_cutoff=_pick(o, "anomaly_cutoff", 0.6, "online"),
        merge_cosine=_pick(o, "merge_cosine", 0.9, "online"),
        max_hypotheses=_pick(o, "max_hypotheses", 3, "online", int),
        max_docs=_pick(o, "max_docs", 5, "online", int),
    )

    bk = _section(raw, "backend")
    mode = _pick(bk, "mode", "fixtures", "backend", str)
    if mode not in BACKEND_MODES:
        raise ValidationError(f"backend.mode: expected one of {BACKEND_MODES}, got {mode!r}")
    backend = BackendSettings(
        mode=mode,
        fixtures=_resolve(base, bk.get("fixtures")),
        eutils_base=_pick(bk, "eutils_base", BackendSettings.eutils_base, "backend", str),
        llm_endpoint=bk.get("llm_endpoint"),
        cache_dir=_resolve(base, bk.get("cache_dir")),
    )

    out = _section(raw, "output")
    out_dir = Path(out.get("dir", "runs/default"))
    if not out_dir.is_absolute():
        out_dir = (output_base or Path.cwd()) / out_dir

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ValidationError(f"seed: expected a nonnegative integer, got {seed!r}")

    return PipelineConfig(
        seed=seed,
        data_path=_resolve(base, str(data["path"])),
        features=features,
        standard_phenotypes=[dict(x) for x in sp_entries],
        aliases={str(k): str(v) for k, v in aliases.items()},
        embed=embed,
        cluster=cluster,
        sp_temperature=_pick(c, "sp_temperature", 0.5, "cluster"),
        notears=notears,
        bn=bn,
        max_hypotheses=_pick(hy, "max_hypotheses", 10, "hypothesis", int),
        nps=NPSWeights(theta),
        hypothesis_backend=hyp_backend,
        scores=scores,
        docs_per_hypothesis=_pick(ev, "docs_per_hypothesis", 10, "evidence", int),
        workers=max(1, _pick(ev, "workers", 4, "evidence", int)),
        online=online,
        backend=backend,
        output_dir=out_dir,
        raw=raw,
    )


def load_config(path: str | Path, output_base: Path | None = None) -> PipelineConfig:
    path = Path(path)
    raw = _load_yaml(path)
    if not isinstance(raw, Mapping):
        raise ValidationError(f"{path}: top level must be a mapping")
    cfg = from_dict(raw, path.parent, output_base)
    cfg.source = path
    return cfg
