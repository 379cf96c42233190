"""
Result Export Service
CSV tables, fit footers, run manifests and JSON summaries
"""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Any, List, Optional

import numpy as np
import pandas as pd

from models import GiantAtomError
from emission import FieldSnapshot

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.12g'


class ExportError(GiantAtomError):
    """Raised when an output file cannot be written"""
    pass


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {'re': float(value.real), 'im': float(value.imag)}
    if isinstance(value, Path):
        return str(value)
    return value


class ResultWriter:
    """Writes every artifact of one experiment run under <directory>/<stem>*"""

    def __init__(self, directory: Path, stem: str):
        self.directory = Path(directory)
        self.stem = stem
        self.written: List[Path] = []
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error(f"Cannot create output directory {self.directory}: {e}")
            raise ExportError(f"cannot create output directory {self.directory}: {e}") from e

    def path(self, suffix: str, extension: str) -> Path:
        name = f"{self.stem}{'_' + suffix if suffix else ''}.{extension}"
        return self.directory / name

    def record(self, path: Path) -> Path:
        self.written.append(path)
        logger.info(f"wrote {path}")
        return path

    def write_csv(self, frame: pd.DataFrame, suffix: str = '',
                  footer: Optional[List[Dict[str, Any]]] = None) -> Path:
        """
        Header row plus data; optional footer rows are appended as
        '# key,value,...' comment lines so pandas can skip them with comment='#'.
        """
        path = self.path(suffix, 'csv')
        try:
            frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
            if footer:
                with path.open('a') as handle:
                    handle.write(f"# {','.join(footer[0].keys())}\n")
                    for row in footer:
                        cells = [FLOAT_FORMAT % v if isinstance(v, float) else str(v) for v in row.values()]
                        handle.write(f"# {','.join(cells)}\n")
        except OSError as e:
            raise ExportError(f"cannot write {path}: {e}") from e
        return self.record(path)

    def write_json(self, payload: Dict[str, Any], suffix: str) -> Path:
        path = self.path(suffix, 'json')
        try:
            path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + '\n')
        except OSError as e:
            raise ExportError(f"cannot write {path}: {e}") from e
        return self.record(path)

    def write_manifest(self, resolved: Dict[str, Any], overrides: List[Dict[str, Any]],
                       version: str, source: Optional[str]) -> Path:
        payload = {
            'parameters': resolved,
            'seed': resolved.get('seed'),
            'toolkit_version': version,
            'config_file': source,
            'overrides': overrides,
            'outputs': [p.name for p in self.written],
            'created_utc': datetime.now(timezone.utc).isoformat(timespec='seconds'),
        }
        return self.write_json(payload, 'manifest')


def trajectory_frame(times: np.ndarray, beta: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame({
        't': times,
        're_beta': beta.real,
        'im_beta': beta.imag,
        'abs_beta2': np.abs(beta) ** 2,
    })


def field_frame(snapshot: FieldSnapshot) -> pd.DataFrame:
    values = snapshot.values
    return pd.DataFrame({
        'x': snapshot.grid,
        're_phi': values.real,
        'im_phi': values.imag,
        'abs_phi2': snapshot.intensity,
        'photon_density': snapshot.photon_density,
    })


def eigenvalue_frame(phi_grid: np.ndarray, eigenvalues: np.ndarray) -> pd.DataFrame:
    """phi0 followed by re_lambda_1..16 and im_lambda_1..16"""
    count = eigenvalues.shape[1]
    columns = {'phi0': phi_grid}
    columns.update({f're_lambda_{j + 1}': eigenvalues[:, j].real for j in range(count)})
    columns.update({f'im_lambda_{j + 1}': eigenvalues[:, j].imag for j in range(count)})
    return pd.DataFrame(columns)


def read_sweep(path: str) -> pd.DataFrame:
    """Load a sweep CSV, skipping the '#' fit footer"""
    try:
        return pd.read_csv(path, comment='#')
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ExportError(f"cannot read sweep data {path}: {e}") from e
