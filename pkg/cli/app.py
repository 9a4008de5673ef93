"""Command-line interface"""
import functools
import json
import logging
from pathlib import Path
from typing import Optional

import click
import numpy as np
from PIL import Image

from config import (
    APP_NAME, APP_VERSION, DEFAULT_CONFIG_PATH, DEFAULT_PCK_ALPHAS, DEFAULT_N_SAMPLES,
    DEFAULT_OCCLUSION_RATE, DEFAULT_AMBIGUITY, DEFAULT_NOISE_STD,
)
from models.dataset import DatasetSpec
from models.network import DenseQP
from services.checkpoint_service import check_architecture, load_checkpoint, save_checkpoint
from services.dataset_io import load_dataset, load_manifest, write_dataset, write_manifest
from services.dense_solvers import dense_coordinate_descent, projected_gradient
from services.evaluation import evaluate_model
from services.excel_exporter import ExcelExporter
from services.experiments import run_depth_study, summarize
from services.heatmap_export import export_prediction
from services.inference import qp_k
from services.plots import plot_loss, plot_reports
from services.rg_model import check_copositive_grid, score
from services.run_config import build_model, load_run_config
from services.synth_data import generate_dataset
from services.training import filter_gradient_split, finite_diff_check, predict_heads, train
from utils.constants import EXIT_RUNTIME, EXIT_USAGE
from utils.errors import ConfigError, RGNetError
from utils.formatters import format_eval_report, format_fraction, format_percent, format_table

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-3


def handle_errors(func):
    """Exit 2 for configuration errors, 1 for any other failure"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as e:
            click.echo(f"Configuration error: {e}", err=True)
            click.get_current_context().exit(EXIT_USAGE)
        except (RGNetError, OSError) as e:
            click.echo(f"Error: {e}", err=True)
            click.get_current_context().exit(EXIT_RUNTIME)
    return wrapper


def _run_config(ctx):
    obj = ctx.obj
    if 'run_config' not in obj:
        path = obj['config_path']
        if path is None and DEFAULT_CONFIG_PATH.is_file():
            path = DEFAULT_CONFIG_PATH
        obj['run_config'] = load_run_config(path, overrides={'SEED': obj['seed'], 'K': obj['k']})
    return obj['run_config']


def _require_excel(xlsx: Optional[Path]) -> None:
    if xlsx is not None and not ExcelExporter.is_available():
        raise ConfigError("--xlsx needs openpyxl, which is not installed")


def _load_samples(path: Path):
    path = Path(path)
    if path.is_dir() or path.suffix == '.txt':
        return load_manifest(path)
    return load_dataset(path)


def _parse_ints(text: str, name: str):
    try:
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise ConfigError(f"{name}: expected comma-separated integers, got '{text}'") from None


@click.group()
@click.version_option(APP_VERSION, prog_name=APP_NAME)
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help='Run configuration document (KEY=VALUE)')
@click.option('--seed', type=int, default=None, help='Override the configured seed')
@click.option('--k', type=click.IntRange(min=1), default=None, help='Number of inference passes')
@click.option('--verbose', '-v', is_flag=True, help='Debug logging')
@click.pass_context
def cli(ctx, config_path, seed, k, verbose):
    """Hierarchical rectified Gaussian keypoint models"""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, seed=seed, k=k)


@cli.command('gen-data')
@click.argument('out', type=click.Path(dir_okay=False, path_type=Path))
@click.option('--n-samples', type=click.IntRange(min=0), default=DEFAULT_N_SAMPLES, show_default=True)
@click.option('--occlusion', type=click.FloatRange(0, 1), default=DEFAULT_OCCLUSION_RATE, show_default=True)
@click.option('--ambiguity', type=click.FloatRange(0, 1), default=DEFAULT_AMBIGUITY, show_default=True)
@click.option('--noise', type=click.FloatRange(min=0), default=DEFAULT_NOISE_STD, show_default=True)
@click.option('--manifest', type=click.Path(file_okay=False, path_type=Path), help='Also write PGMs and a manifest')
@click.pass_context
@handle_errors
def gen_data(ctx, out, n_samples, occlusion, ambiguity, noise, manifest):
    """Generate a synthetic occluded stick-figure dataset"""
    cfg = _run_config(ctx)
    spec = DatasetSpec(n_samples=n_samples, image_size=cfg.image_size, n_keypoints=cfg.n_keypoints,
                       occlusion_rate=occlusion, ambiguity=ambiguity, noise_std=noise, seed=cfg.train.seed)
    dataset = generate_dataset(spec)
    write_dataset(dataset, out)
    if manifest is not None:
        write_manifest(dataset, manifest)
    click.echo(f"Wrote {len(dataset)} samples to {out}")


@cli.command('train')
@click.argument('dataset', type=click.Path(exists=True, path_type=Path))
@click.argument('out', type=click.Path(dir_okay=False, path_type=Path))
@click.option('--no-coarse-to-fine', is_flag=True, help='Train all heads from the start')
@click.option('--plot', type=click.Path(dir_okay=False, path_type=Path), help='Write a loss curve')
@click.pass_context
@handle_errors
def train_cmd(ctx, dataset, out, no_coarse_to_fine, plot):
    """Train a model on DATASET and write a checkpoint to OUT"""
    cfg = _run_config(ctx)
    samples = _load_samples(dataset)
    net, heads = build_model(cfg)

    log_path = out.with_suffix(out.suffix + '.log')
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(log_path, 'w') as log:
        log.write("stage epoch loss seconds\n")

        def on_epoch(record):
            log.write(f"{record.stage} {record.epoch} {record.loss:.8f} {record.seconds:.3f}\n")
            log.flush()
            click.echo(f"stage {record.stage} epoch {record.epoch}: loss {record.loss:.6f}")

        ckpt = train(samples, net, heads, cfg.train, coarse_to_fine=not no_coarse_to_fine, on_epoch=on_epoch)

    save_checkpoint(ckpt, out)
    if plot is not None and ckpt.history:
        plot_loss(ckpt.history, plot)
    click.echo(f"Checkpoint written to {out}")


@cli.command('infer')
@click.argument('checkpoint', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument('image', type=click.Path(exists=True, path_type=Path))
@click.argument('out_dir', type=click.Path(file_okay=False, path_type=Path))
@click.option('--index', type=click.IntRange(min=0), default=0, show_default=True,
              help='Sample to use when IMAGE is a dataset')
@click.option('--threshold', type=click.FloatRange(0, 1), default=None,
              help='Visibility threshold on confidence (default from config)')
@click.pass_context
@handle_errors
def infer(ctx, checkpoint, image, out_dir, index, threshold):
    """Write heatmaps and a keypoint report for one image (PGM) or dataset sample"""
    ckpt = load_checkpoint(checkpoint)
    if ctx.obj['config_path'] is not None:
        check_architecture(ckpt, *build_model(_run_config(ctx)))
    k = ctx.obj['k'] or ckpt.k
    if threshold is None:
        threshold = _run_config(ctx).visibility_threshold

    if image.suffix.lower() in ('.pgm', '.png'):
        with Image.open(image) as img:
            pixels = np.asarray(img.convert('L'), dtype=np.float64) / 255.0
        x = pixels.astype(np.float32).astype(np.float64)[None]
        size = x.shape[-1]
    else:
        samples = _load_samples(image)
        if index >= len(samples):
            raise RGNetError(f"sample index {index} out of range for {len(samples)} samples")
        x, size = samples[index].image, samples[index].image_size

    logits = predict_heads(ckpt.heads, qp_k(ckpt.net, x, k))
    report = export_prediction(logits, size, out_dir, threshold)
    click.echo(report.read_text(), nl=False)


@cli.command('eval')
@click.argument('checkpoint', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument('dataset', type=click.Path(exists=True, path_type=Path))
@click.option('--ks', default=None, help='Comma-separated k values to evaluate (default: --k or the trained k)')
@click.option('--xlsx', type=click.Path(dir_okay=False, path_type=Path), help='Export the report to Excel')
@click.option('--plot', type=click.Path(dir_okay=False, path_type=Path), help='Write PR and PCK curves')
@click.pass_context
@handle_errors
def eval_cmd(ctx, checkpoint, dataset, ks, xlsx, plot):
    """PCK and visibility precision-recall of CHECKPOINT on DATASET"""
    _require_excel(xlsx)
    threshold = _run_config(ctx).visibility_threshold
    ckpt = load_checkpoint(checkpoint)
    samples = _load_samples(dataset)
    ks = _parse_ints(ks, '--ks') if ks else [ctx.obj['k'] or ckpt.k]

    reports = []
    for k in ks:
        report = evaluate_model(ckpt.net, ckpt.heads, samples, k, DEFAULT_PCK_ALPHAS, threshold)
        reports.append(report)
        click.echo(format_eval_report(report))

    if xlsx is not None:
        result = ExcelExporter().export_reports(reports, str(xlsx))
        if not result['success']:
            raise RGNetError(f"Excel export failed: {result['error']}")
        click.echo(f"Report written to {result['path']}")
    if plot is not None:
        plot_reports(reports, plot)
        click.echo(f"Curves written to {plot}")


@cli.command('check-grad')
@click.option('--n-samples', type=click.IntRange(min=1), default=2, show_default=True)
@click.option('--eps', type=float, default=1e-5, show_default=True)
@click.option('--max-per-param', type=click.IntRange(min=1), default=20, show_default=True)
@click.pass_context
@handle_errors
def check_grad(ctx, n_samples, eps, max_per_param):
    """Compare backpropagated gradients with finite differences on random parameters"""
    cfg = _run_config(ctx)
    rng = np.random.default_rng(cfg.train.seed)
    net, heads = build_model(cfg)
    for b in net.biases:
        b[...] = rng.normal(0.0, 0.1, size=b.shape)
    for p in [heads.coarse.weight, heads.coarse.bias] + [a for t in heads.taps for a in (t.weight, t.bias)]:
        p[...] = rng.normal(0.0, 0.1, size=p.shape)
    spec = DatasetSpec(n_samples=n_samples, image_size=cfg.image_size, n_keypoints=cfg.n_keypoints,
                       seed=cfg.train.seed)
    samples = list(generate_dataset(spec))

    err = finite_diff_check(net, heads, samples, cfg.train.k, eps=eps, radius=cfg.train.positive_radius,
                            max_per_param=max_per_param, rng=rng)
    click.echo(f"k={cfg.train.k}: max relative error {err:.3e}")
    rows = []
    for name, (bottom_up, top_down) in filter_gradient_split(net, heads, samples, cfg.train.k,
                                                             radius=cfg.train.positive_radius).items():
        rows.append([name, f"{np.linalg.norm(bottom_up):.3e}", f"{np.linalg.norm(top_down):.3e}"])
    click.echo(format_table(["filter", "|bottom-up|", "|top-down|"], rows))
    if err >= GRADIENT_TOLERANCE:
        raise RGNetError(f"gradient check failed: {err:.3e} >= {GRADIENT_TOLERANCE}")


@cli.command('solve-qp')
@click.argument('problem', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option('--method', type=click.Choice(['cd', 'pg', 'copositive']), default='cd', show_default=True)
@click.option('--resolution', type=click.IntRange(min=1), default=20, show_default=True)
@click.option('--iters', type=click.IntRange(min=1), default=10000, show_default=True)
@click.option('--step', type=float, default=None, help='Projected-gradient step (default 1/largest eigenvalue)')
@handle_errors
def solve_qp(problem, method, resolution, iters, step):
    """Solve a dense QP given as JSON {"W": [[...]], "b": [...], "groups": [[...]]}"""
    try:
        data = json.loads(problem.read_text())
        qp = DenseQP(W=np.array(data['W'], dtype=np.float64), b=np.array(data['b'], dtype=np.float64),
                     groups=[list(g) for g in data.get('groups', [])])
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"{problem}: {e}") from e

    if method == 'copositive':
        verdict = check_copositive_grid(-qp.W, resolution)
        out = {'copositive': verdict.copositive, 'min_value': verdict.min_value,
               'points_checked': verdict.points_checked,
               'counterexample': None if verdict.counterexample is None else verdict.counterexample.tolist()}
    elif method == 'cd':
        result = dense_coordinate_descent(qp, max_sweeps=iters)
        out = {'z': result.z.tolist(), 'sweeps': result.sweeps_used, 'converged': result.converged,
               'diverged': result.diverged, 'score': None if result.diverged else score(qp, result.z)}
    else:
        if step is None:
            step = 1.0 / max(float(np.max(np.abs(np.linalg.eigvalsh(qp.W)))), 1e-12)
        z = projected_gradient(qp, step, iters)
        out = {'z': z.tolist(), 'score': score(qp, z)}
    click.echo(json.dumps(out, indent=2))


@cli.command('depth-study')
@click.argument('train_set', type=click.Path(exists=True, path_type=Path))
@click.argument('test_set', type=click.Path(exists=True, path_type=Path))
@click.option('--ks', default='1,2,3,4', show_default=True)
@click.option('--seeds', default='0', show_default=True)
@click.option('--alpha', type=float, default=0.1, show_default=True)
@click.option('--xlsx', type=click.Path(dir_okay=False, path_type=Path))
@click.option('--plot', type=click.Path(dir_okay=False, path_type=Path))
@click.pass_context
@handle_errors
def depth_study(ctx, train_set, test_set, ks, seeds, alpha, xlsx, plot):
    """Train identical models for several k and compare PCK and visibility recall"""
    _require_excel(xlsx)
    cfg = _run_config(ctx)
    ks, seeds = _parse_ints(ks, '--ks'), _parse_ints(seeds, '--seeds')
    if not ks or min(ks) < 1:
        raise ConfigError("--ks: k values must be >= 1")
    alphas = sorted(set(DEFAULT_PCK_ALPHAS) | {alpha})
    results = run_depth_study(list(_load_samples(train_set)), list(_load_samples(test_set)), cfg, ks, seeds, alphas)

    rows = [[str(r.k), format_fraction(r.pck), format_fraction(r.pck_std), format_percent(r.recall_at_p80),
             str(r.n_seeds)] for r in summarize(results, alpha)]
    click.echo(format_table(["k", f"PCK@{alpha:g}", "std", "recall@P80", "seeds"], rows))

    first = [reports[0] for _, reports in sorted(results.items())]
    if xlsx is not None:
        result = ExcelExporter().export_reports(first, str(xlsx), title="Recurrence depth study")
        if not result['success']:
            raise RGNetError(f"Excel export failed: {result['error']}")
    if plot is not None:
        plot_reports(first, plot)


def main():
    cli(obj={})
