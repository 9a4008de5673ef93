from .tensor_ops import correlate, convolve_transposed, rectify, max_pool
from .rg_model import score, check_copositive_grid, dense_expand, layered_score, replicate_filter
from .inference import qp_k, qp_until_converged, layer_update, pass_schedule
from .dense_solvers import dense_coordinate_descent, projected_gradient
from .training import train, predict, backward, filter_gradient_split, finite_diff_check
from .synth_data import generate_dataset, make_target
from .dataset_io import load_dataset, write_dataset, load_manifest, write_manifest
from .checkpoint_service import load_checkpoint, save_checkpoint
from .evaluation import evaluate_model
from .run_config import RunConfig, load_run_config, build_model
from .excel_exporter import ExcelExporter

__all__ = [
    'correlate', 'convolve_transposed', 'rectify', 'max_pool',
    'score', 'check_copositive_grid', 'dense_expand', 'layered_score', 'replicate_filter',
    'qp_k', 'qp_until_converged', 'layer_update', 'pass_schedule',
    'dense_coordinate_descent', 'projected_gradient',
    'train', 'predict', 'backward', 'filter_gradient_split', 'finite_diff_check',
    'generate_dataset', 'make_target',
    'load_dataset', 'write_dataset', 'load_manifest', 'write_manifest',
    'load_checkpoint', 'save_checkpoint', 'evaluate_model',
    'RunConfig', 'load_run_config', 'build_model', 'ExcelExporter',
]
