"""Embedded scenario presets, one per reproduced figure plus the default
factory world. All values are plain dicts with the same schema as the TOML
config files, so `--preset` needs no files on disk."""

from __future__ import annotations

import copy
from typing import Any

PRESETS: dict[str, dict[str, Any]] = {
    # Fig. 4a analogue: multi-BS cooperative target localization.
    # The first four base stations sit exactly 12 m from the target so the
    # equal-SNR averaging law is exercised with identical error statistics.
    "fig4a": {
        "name": "fig4a",
        "experiment": "COOP_LOCALIZATION",
        "seed": 1,
        "trials": 2000,
        "world": {"preset": "open_hall"},
        "signal": {"carrier_freq_hz": 28e9, "bandwidth_hz": 1.23e9,
                   "num_subcarriers": 128, "num_symbols": 1,
                   "snr_db": 0.0, "detection_threshold": 20.0},
        "params": {
            "bs_positions": [[18.0, 15.0], [42.0, 15.0], [30.0, 27.0],
                             [30.0, 3.0], [21.0, 24.0], [39.0, 24.0],
                             [21.0, 6.0], [39.0, 6.0]],
            "target": [30.0, 15.0],
            "k_values": [1, 2, 4, 8],
            "snr_db_values": [0.0],
            "bs_antenna_count": 16,
        },
    },
    # Figs. 4b-4d analogue: environment reconstruction with one vs two AGVs.
    "fig4bcd": {
        "name": "fig4bcd",
        "experiment": "SLAM_RECON",
        "seed": 1,
        "trials": 20,
        "world": {"preset": "factory_default"},
        "signal": {"carrier_freq_hz": 28e9, "bandwidth_hz": 1.23e9,
                   "num_subcarriers": 256, "num_symbols": 1,
                   "snr_db": -10.0, "detection_threshold": 20.0},
        "params": {
            "agv_trajectories": [
                [[0.0, 4.0, 3.0], [35.0, 56.0, 3.0], [51.0, 56.0, 27.0],
                 [86.0, 4.0, 27.0], [102.0, 4.0, 3.0]],
                [[0.0, 4.0, 15.0], [35.0, 56.0, 15.0], [70.0, 4.0, 15.0]],
            ],
            "num_rays": 40,
            "max_range": 30.0,
            "frame_dt": 6.0,
            "cell_size": 0.25,
        },
    },
    # Fig. 5a analogue: feedback vs sensing-assisted beam tracking while the
    # IM crosses the BS boresight at 10 m/s with 20 m lateral offset.
    "fig5a": {
        "name": "fig5a",
        "experiment": "BEAM_TRACKING",
        "seed": 1,
        "trials": 20,
        "world": {"preset": "open_hall"},
        "signal": {"carrier_freq_hz": 28e9, "bandwidth_hz": 1.23e9,
                   "num_subcarriers": 256, "num_symbols": 1,
                   "snr_db": 10.0, "detection_threshold": 20.0},
        "twin": {"rebuild_interval_s": 0.01, "ingest_delay_s": 0.01},
        "params": {
            "n_values": [8, 16, 32, 64],
            "bs_position": [0.0, 15.0],
            "bs_heading": 0.0,
            "im_path": [[0.0, 20.0, 29.0], [5.6, 20.0, 1.0]],
            "frame_dt": 0.01,
            "snr0_db": 0.0,
        },
    },
    # Fig. 5b analogue: uniform gossip vs DT-gossip neighbor discovery.
    "fig5b": {
        "name": "fig5b",
        "experiment": "NEIGHBOR_DISCOVERY",
        "seed": 1,
        "trials": 50,
        "world": {"preset": "factory_default"},
        "params": {
            "num_nodes": 30,
            "comm_range": 15.0,
            "num_sectors": 8,
            "max_rounds": 64,
            "threshold": 0.9,
        },
    },
    # Quick single-seed reconstruction of the default factory hall.
    "factory_default": {
        "name": "factory_default",
        "experiment": "SLAM_RECON",
        "seed": 1,
        "trials": 1,
        "world": {"preset": "factory_default"},
        "signal": {"carrier_freq_hz": 28e9, "bandwidth_hz": 1.23e9,
                   "num_subcarriers": 256, "num_symbols": 1,
                   "snr_db": -5.0, "detection_threshold": 20.0},
        "params": {
            "num_rays": 36,
            "max_range": 30.0,
            "frame_dt": 3.0,
            "cell_size": 0.25,
        },
    },
}


def preset(name: str) -> dict[str, Any]:
    """Deep copy of a named preset dict."""
    return copy.deepcopy(PRESETS[name])
