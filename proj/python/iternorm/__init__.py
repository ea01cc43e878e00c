"""Iterative surface normal estimation for unstructured point clouds."""

from iternorm._core import (
    IoError,
    NumericError,
    estimate_normals,
    knn_graph,
    load_normals,
    load_pidx,
    load_xyz,
    normalize,
    num_parameters,
    pca_normals,
    pgp_curve,
    quat_to_rot,
    rmse_angle,
    save_normals,
    save_xyz,
    set_num_threads,
    sign_flip_loss,
    sym_eig3,
    sym_eig3_backward,
    synth,
    train,
    __version__,
)

__all__ = [
    "IoError",
    "NumericError",
    "estimate_normals",
    "knn_graph",
    "load_normals",
    "load_pidx",
    "load_xyz",
    "normalize",
    "num_parameters",
    "pca_normals",
    "pgp_curve",
    "quat_to_rot",
    "rmse_angle",
    "save_normals",
    "save_xyz",
    "set_num_threads",
    "sign_flip_loss",
    "sym_eig3",
    "sym_eig3_backward",
    "synth",
    "train",
    "__version__",
]
