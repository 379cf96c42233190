"""
Plotting Service
Self-contained SVG line plots, pole maps and heatmaps
"""

import logging
from pathlib import Path
from typing import Dict, Optional

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

logger = logging.getLogger(__name__)

# glyphs as paths, fixed element ids
plt.rcParams['svg.fonttype'] = 'path'
plt.rcParams['svg.hashsalt'] = 'giantatom'

SVG_METADATA = {'Date': None, 'Creator': None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata=SVG_METADATA)
    plt.close(fig)
    logger.debug(f"rendered {path}")
    return path


def line_plot(path: Path, x: np.ndarray, series: Dict[str, np.ndarray], xlabel: str, ylabel: str,
              title: Optional[str] = None, logx: bool = False, logy: bool = False,
              fits: Optional[Dict[str, np.ndarray]] = None, legend: bool = True) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in series.items():
        ax.plot(x, values, label=label, linewidth=1.2, marker='o' if fits else None, markersize=3)
    for label, values in (fits or {}).items():
        ax.plot(x, values, label=label, linestyle='--', linewidth=1.0)
    if logx:
        ax.set_xscale('log')
    if logy:
        ax.set_yscale('log')
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if legend and len(series) + len(fits or {}) > 1:
        ax.legend(frameon=False)
    return _save(fig, path)


def pole_map(path: Path, poles: np.ndarray, title: Optional[str] = None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(poles.real, poles.imag, s=12)
    ax.axvline(0.0, color='grey', linewidth=0.6)
    ax.set_xlabel('Re s')
    ax.set_ylabel('Im s')
    if title:
        ax.set_title(title)
    return _save(fig, path)


def heatmap(path: Path, frame: pd.DataFrame, value: str, title: Optional[str] = None) -> Path:
    """sigma_g down the rows, sigma_x across the columns"""
    table = frame.pivot(index='sigma_g', columns='sigma_x', values=value)
    fig, ax = plt.subplots(figsize=(6, 5))
    sns.heatmap(table, ax=ax, cmap='viridis',
                xticklabels=[f'{v:.3g}' for v in table.columns],
                yticklabels=[f'{v:.3g}' for v in table.index])
    ax.invert_yaxis()
    ax.set_xlabel('sigma_x')
    ax.set_ylabel('sigma_g')
    if title:
        ax.set_title(title)
    return _save(fig, path)
