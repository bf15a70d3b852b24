"""
Run Artifacts
Écriture des CSV, valeurs scalaires et du manifeste d'un run
"""

import json
import platform
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pandas as pd
import scipy
import yaml
from loguru import logger

CSV_FLOAT_FORMAT = "%.16e"


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """CSV avec en-tête, flottants en '%.16e' (relecture sans perte)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"💾 {path.name}: {len(frame)} ligne(s)")
    return path


def read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def write_value(path: Path, value: Any) -> Path:
    """Fichier texte d'une seule valeur (None → 'nan')."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = "nan" if value is None else (CSV_FLOAT_FORMAT % value if isinstance(value, float) else str(value))
    path.write_text(text + "\n", encoding='utf-8')
    return path


def package_versions() -> Dict[str, str]:
    return {
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'pandas': pd.__version__,
        'pyyaml': yaml.__version__,
    }


def write_manifest(out_dir: Path, manifest: Dict[str, Any]) -> Path:
    """Sauvegarde le manifeste du run en JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    output_file = out_dir / "manifest.json"
    with open(output_file, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, ensure_ascii=False, default=str)
    logger.info(f"📁 Manifeste sauvegardé: {output_file}")
    return output_file
