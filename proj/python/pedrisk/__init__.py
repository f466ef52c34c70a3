"""Pedestrian-vehicle risk analysis over CCTV detections."""

from ._pedrisk import (
    PedriskError,
    acceleration_list,
    apply_homography,
    fit_homography,
    low_pass,
    pixels_per_meter,
    psm,
    psm_ranges,
    random_crossing_pair,
    range_of,
    run_all,
    run_analyze,
    run_extract,
    run_report,
    run_segment,
    run_synth,
    run_track,
    seconds_per_step,
    speed_list,
    standard_scenarios,
    weighted_merge,
    weighted_quantile,
)

__all__ = [name for name in dir() if not name.startswith("_")]
