"""Command-line interface: synth, extract, train, match and eval.

Every command takes an optional YAML ``--config`` whose keys mirror
:class:`~xmodal.pipeline.PipelineConfig` (plus an optional ``synthetic``
section for ``synth``). Flags override the file, the file overrides the
defaults, and the effective config is written to ``config.yaml`` in every
output directory.
"""

from __future__ import annotations

import copy
import functools
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from .archive import read_model, write_model
from .benchmark import benchmark_spec
from .evaluation import SplitPlan, run_protocol, split_scores
from .features import N_POINTS, POINTS_PER_HALF, extract_face, load_template
from .manifest import format_manifest, parse_landmarks, parse_manifest
from .pipeline import HeterogeneousMatcher, PipelineConfig, _merge
from .store import (
    line_svg,
    load_features,
    read_pgm,
    save_features,
    scores_csv,
    table_csv,
)
from .synthetic import SyntheticSpec, generate_synthetic, render_synthetic_images

CONFIG_FILE = "config.yaml"
MODELS_CONFIG = "config.yaml"


class StageError(click.ClickException):
    """Error carrying the pipeline stage it came from."""

    def __init__(self, stage, message):
        super().__init__(message)
        self.stage = stage

    def format_message(self):
        return f"[{self.stage}] {self.message}"

    def show(self, file=None):
        click.echo(f"xmodal: error: {self.format_message()}", err=True)


def staged(stage):
    """Turn any exception escaping a command into a stage-tagged nonzero exit."""
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except (StageError, click.exceptions.Exit, click.Abort):
                raise
            except click.ClickException as exc:
                raise StageError(stage, exc.format_message()) from exc
            except Exception as exc:  # noqa: BLE001 - reported, not swallowed
                raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
        return run
    return wrap


# ---------------------------------------------------------------------------
# config plumbing


def _read_yaml(path):
    if path is None:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise StageError("config", f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise StageError("config", f"{path}: top level must be a mapping")
    return data


def load_config(path=None, seed=None, regime=None, removed_k=None, no_rbm=False,
                zscore=False, base=None):
    """Effective config and synthetic section: defaults < file < flags."""
    data = _read_yaml(path)
    synth = data.pop("synthetic", None)
    try:
        cfg = _merge(copy.deepcopy(base) if base is not None else PipelineConfig(), data)
        overrides = {}
        if seed is not None:
            overrides["seed"] = seed
        if regime is not None:
            overrides["bank.regime"] = regime
        if no_rbm:
            overrides["use_rbm"] = False
        if zscore:
            overrides["zscore"] = True
        if overrides:
            cfg = cfg.updated(**overrides)
        if removed_k is not None:
            key = "head.removed_k_rbm" if cfg.use_rbm else "head.removed_k_no_rbm"
            cfg = cfg.updated(**{key: removed_k})
    except (TypeError, ValueError) as exc:
        raise StageError("config", str(exc)) from exc
    return cfg, synth


def _dump_yaml(data) -> str:
    return yaml.safe_dump(data, sort_keys=True, default_flow_style=False)


def echo_config(out: Path, cfg: PipelineConfig, extra=None):
    data = cfg.to_dict()
    if extra:
        data.update(extra)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(_dump_yaml(data), encoding="utf-8")


def _synthetic_spec(section, seed):
    if section is None:
        spec = benchmark_spec()
    else:
        try:
            spec = SyntheticSpec(**section)
        except TypeError as exc:
            raise StageError("config", f"synthetic section: {exc}") from exc
    if seed is not None:
        spec = SyntheticSpec(**{**spec.to_dict(), "seed": seed})
    return spec


def parse_range(text: str) -> list[int]:
    """``"A..B"`` (inclusive) or a single integer."""
    try:
        if ".." in text:
            lo, hi = (int(t) for t in text.split("..", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise click.BadParameter(f"expected A..B, got {text!r}") from None
    if lo < 0 or hi < lo:
        raise click.BadParameter(f"invalid range {text!r}")
    return list(range(lo, hi + 1))


def common_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="YAML config file."),
        click.option("--seed", type=int, default=None, help="Master seed."),
        click.option("--out", "out", type=click.Path(file_okay=False), required=True,
                     help="Output directory."),
        click.option("--regime", type=click.Choice(["local", "conv", "global"]), default=None),
        click.option("--removed-k", type=int, default=None,
                     help="Leading principal components removed by the head."),
        click.option("--no-rbm", is_flag=True, help="Gabor + PCA baseline without the bank."),
        click.option("--zscore", is_flag=True, help="Per-probe z-score normalization."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _effective(kw, base=None):
    return load_config(kw["config_path"], kw["seed"], kw["regime"], kw["removed_k"],
                       kw["no_rbm"], kw["zscore"], base=base)


# ---------------------------------------------------------------------------
# model directory


def save_matcher(out: Path, matcher: HeterogeneousMatcher):
    for i, bank in enumerate(matcher.banks_):
        name = "bank.xmrb" if len(matcher.banks_) == 1 else f"bank_{i}.xmrb"
        write_model(out / name, bank)
    for h, head in enumerate(matcher.heads_):
        write_model(out / f"head_{h}.xmrb", head)


def load_matcher(models: Path, cfg: PipelineConfig) -> HeterogeneousMatcher:
    heads = [read_model(p) for p in sorted(models.glob("head_*.xmrb"))]
    if not heads:
        raise FileNotFoundError(f"no head_*.xmrb archives in {models}")
    banks = []
    if cfg.use_rbm:
        single = models / "bank.xmrb"
        paths = [single] if single.exists() else sorted(models.glob("bank_*.xmrb"))
        if not paths:
            raise FileNotFoundError(f"no bank archive in {models}")
        banks = [read_model(p) for p in paths]
    n_points = banks[0].n_points_ if banks else None
    return HeterogeneousMatcher.from_parts(cfg, banks, heads, n_points)


def _load_store(path, stage):
    try:
        return load_features(path)
    except (OSError, ValueError) as exc:
        raise StageError(stage, f"cannot load feature store {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# commands


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Cross-modal face matching with per-point multi-modal RBMs."""


@main.command()
@common_options
@click.option("--images", is_flag=True,
              help="Render PGM images and landmark files instead of jets.")
@staged("synth")
def synth(images, **kw):
    """Generate a synthetic cross-modal dataset."""
    cfg, section = _effective(kw)
    spec = _synthetic_spec(section, kw["seed"])
    out = Path(kw["out"])
    out.mkdir(parents=True, exist_ok=True)
    if images:
        manifest = render_synthetic_images(spec, out / "images")
        manifest.entries[:] = [type(e)(e.sample_id, e.subject_id, e.modality,
                                       f"images/{e.image_path}", f"images/{e.landmark_path}")
                               for e in manifest.entries]
    else:
        data = generate_synthetic(spec)
        manifest = data.manifest
        save_features(out, manifest, data.features)
    (out / "manifest.txt").write_text(format_manifest(manifest), encoding="utf-8")
    echo_config(out, cfg, {"synthetic": spec.to_dict()})
    click.echo(f"wrote {len(manifest)} samples to {out}")


@main.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@common_options
@staged("extract")
def extract(manifest, **kw):
    """Extract Gabor jets at warped facial points for every manifest entry.

    Image and landmark paths are resolved relative to the manifest file.
    """
    cfg, _ = _effective(kw)
    mpath = Path(manifest)
    m = parse_manifest(mpath.read_text(encoding="utf-8"))
    root = mpath.parent
    template = load_template()
    bank = cfg.gabor.bank_spec()
    feats = np.empty((len(m), 2, POINTS_PER_HALF, bank.n_kernels))
    for i, e in enumerate(m.entries):
        lm_path = root / e.landmark_path
        if not lm_path.is_file():
            raise FileNotFoundError(f"sample {e.sample_id}: missing landmark file {lm_path}")
        img_path = root / e.image_path
        if not img_path.is_file():
            raise FileNotFoundError(f"sample {e.sample_id}: missing image {img_path}")
        lms = parse_landmarks(lm_path.read_text(encoding="utf-8"))
        feats[i] = extract_face(read_pgm(img_path), lms, template, bank,
                                cfg.gabor.deformation_factor)
    out = Path(kw["out"])
    save_features(out, m, feats)
    echo_config(out, cfg)
    click.echo(f"extracted {len(m)} x {N_POINTS} jets to {out}")


@main.command()
@click.argument("store", type=click.Path(exists=True, file_okay=False))
@common_options
@staged("train")
def train(store, **kw):
    """Fit the bank and heads on every sample of a feature store."""
    cfg, _ = _effective(kw)
    feats, ids, subjects, modalities = _load_store(store, "train")
    matcher = HeterogeneousMatcher(cfg).fit(feats, subjects, modalities)
    out = Path(kw["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_matcher(out, matcher)
    echo_config(out, cfg)
    a, b = modalities == "A", modalities == "B"
    gen, imp = split_scores(matcher.score(feats[a], feats[b], "A", "B"), subjects[a],
                            subjects[b])
    margin = float(np.mean(gen) - np.mean(imp)) if len(gen) and len(imp) else float("nan")
    arch = matcher.banks_[0].architecture if matcher.banks_ else "none"
    lines = [f"architecture\t{arch}", f"removed_k\t{matcher.removed_k_}",
             f"n_train\t{len(feats)}", f"train_margin\t{margin!r}"]
    (out / "train.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"bank {arch}; train genuine-impostor margin {margin:.4f}")


@main.command()
@click.argument("probes", type=click.Path(exists=True, file_okay=False))
@click.argument("gallery", type=click.Path(exists=True, file_okay=False))
@click.option("--models", type=click.Path(exists=True, file_okay=False), required=True,
              help="Directory written by 'train'.")
@common_options
@staged("match")
def match(probes, gallery, models, **kw):
    """Score every probe against every gallery sample (fused cosine)."""
    if kw["removed_k"] is not None:
        raise click.UsageError("--removed-k has no effect on trained heads; retrain instead")
    models = Path(models)
    base, _ = load_config(models / MODELS_CONFIG)
    cfg, _ = _effective(kw, base=base)
    matcher = load_matcher(models, cfg)
    pf, pids, _, pmods = _load_store(probes, "match")
    gf, gids, _, gmods = _load_store(gallery, "match")
    scores = matcher.score(pf, gf, pmods, gmods)
    out = Path(kw["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "scores.csv").write_text(scores_csv(scores, pids, gids), encoding="utf-8")
    echo_config(out, cfg)
    click.echo(f"scored {len(pids)} x {len(gids)} pairs")


@main.command("eval")
@click.argument("store", type=click.Path(exists=True, file_okay=False))
@common_options
@click.option("--sweep-removed-k", "sweep", default=None,
              help="Also evaluate every removed-k in A..B (inclusive).")
@click.option("--repeats", type=int, default=None, help="Override eval.n_repeats.")
@click.option("--train-metrics", is_flag=True, help="Also score the training subjects.")
@staged("eval")
def eval_cmd(store, sweep, repeats, train_metrics, **kw):
    """Repeated subject-split evaluation of a feature store."""
    cfg, _ = _effective(kw)
    if repeats is not None:
        cfg = cfg.updated(**{"eval.n_repeats": repeats})
    ks = parse_range(sweep) if sweep else []
    feats, _, subjects, modalities = _load_store(store, "eval")
    plan = SplitPlan(cfg.eval.n_repeats, cfg.eval.train_fraction, cfg.seed,
                     cfg.eval.dev_split_index)
    k0 = cfg.removed_k
    all_ks = sorted(set(ks) | {k0})
    reports = run_protocol(cfg, feats, subjects, modalities, plan,
                           evaluate_train=train_metrics, removed_ks=all_ks)
    report = reports[k0]
    out = Path(kw["out"])
    write_report(out, report)
    if ks:
        rows = [(k, reports[k].rank1_mean, reports[k].rank1_std, reports[k].vr_at_far_mean,
                 reports[k].vr_at_far_std) for k in ks]
        (out / "sweep.csv").write_text(
            table_csv(["removed_k", "rank1_mean", "rank1_std", "vr_at_far_mean",
                       "vr_at_far_std"], rows), encoding="utf-8")
        (out / "sweep.svg").write_text(line_svg(
            {"rank-1": (ks, [r[1] for r in rows]), "VR@FAR": (ks, [r[3] for r in rows])},
            "removed principal components", "rate"), encoding="utf-8")
    echo_config(out, cfg)
    click.echo(report.format_text(), nl=False)


def write_report(out: Path, report):
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.format_text(), encoding="utf-8")
    (out / "summary.csv").write_text(table_csv(["metric", "value"], report.summary_rows()),
                                     encoding="utf-8")
    (out / "roc.csv").write_text(table_csv(["far", "vr"], report.roc), encoding="utf-8")
    (out / "cmc.csv").write_text(table_csv(["rank", "hit_rate"], report.cmc), encoding="utf-8")
    rows = [(i, m.rank1, m.vr_at_far, m.d_prime) for i, m in enumerate(report.per_split)]
    header = ["split", "rank1", "vr_at_far", "d_prime"]
    if report.per_split_train:
        header += ["train_rank1", "train_vr_at_far", "train_d_prime"]
        rows = [r + (t.rank1, t.vr_at_far, t.d_prime)
                for r, t in zip(rows, report.per_split_train)]
    (out / "per_split.csv").write_text(table_csv(header, rows), encoding="utf-8")
    far, vr = zip(*report.roc)
    (out / "roc.svg").write_text(line_svg({"ROC": (far, vr)}, "false accept rate",
                                          "verification rate", log_x=True), encoding="utf-8")
    rank, hit = zip(*report.cmc)
    (out / "cmc.svg").write_text(line_svg({"CMC": (rank, hit)}, "rank", "hit rate"),
                                 encoding="utf-8")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
