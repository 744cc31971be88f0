"""Vessel skeleton tracking on synthetic and real volumes.

The heavy lifting lives in the compiled ``_core`` module; this package
re-exports it and adds a couple of numpy conveniences.
"""

from ._core import (
    SphereGraph,
    VolumeGrid,
    __version__,
    betti_numbers,
    direction_target,
    evaluate,
    generate_phantom,
    geometry_weights,
    haversine,
    read_volume,
    run_cli,
    sample_multiscale,
    track_oracle,
    write_volr,
)


def skeleton_args(skel, prefix=""):
    """Spread a skeleton dict into the keyword arguments the core expects."""
    return {
        prefix + "points": skel["points"],
        prefix + "radii": skel["radii"],
        prefix + "edges": skel["edges"],
    }


def track_phantom(phantom, level=4, max_fronts=20):
    """Run the ground-truth oracle tracker from the phantom's default seed."""
    return track_oracle(
        phantom["volume"],
        seeds=[phantom["default_seed"]],
        level=level,
        max_fronts=max_fronts,
        **skeleton_args(phantom["skeleton"]),
    )


def score(pred, ref, step=0.5):
    return evaluate(step=step, **skeleton_args(pred, "pred_"), **skeleton_args(ref, "ref_"))


__all__ = [
    "SphereGraph",
    "VolumeGrid",
    "betti_numbers",
    "direction_target",
    "evaluate",
    "generate_phantom",
    "geometry_weights",
    "haversine",
    "read_volume",
    "run_cli",
    "sample_multiscale",
    "score",
    "skeleton_args",
    "track_oracle",
    "track_phantom",
    "write_volr",
]
