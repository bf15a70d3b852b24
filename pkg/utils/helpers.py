"""
Helper Functions
Fonctions utilitaires diverses
"""

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, TypeVar

import numpy as np
import yaml
from dotenv import load_dotenv
from loguru import logger

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "PROBIN_THREADS"


def load_config(config_path: str = "config/settings.yaml") -> Dict[str, Any]:
    """
    Lit un fichier de configuration pRobin: une section par thème (run,
    domain, problem, solver, ...) contenant des paires clé: valeur plates.

    Un fichier vide donne {}. Les clés et les valeurs sont validées par
    main.parse_config.

    Raises:
        FileNotFoundError: Fichier absent
        ValueError: YAML illisible ou racine qui n'est pas un dictionnaire de sections
    """
    path = Path(config_path)

    if not path.exists():
        raise FileNotFoundError(f"pRobin config file not found: {path} "
                                f"(config/settings.yaml shows the expected sections)")

    with open(path, 'r', encoding='utf-8') as f:
        try:
            config = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ValueError(f"pRobin config {path}: invalid YAML ({exc})")

    if config is not None and not isinstance(config, dict):
        raise ValueError(f"pRobin config {path}: expected a mapping of sections "
                         f"(run, domain, problem, ...), got {type(config).__name__}")
    return config or {}


def dump_config(config: Dict[str, Any], path: Path) -> Path:
    """Écrit une configuration résolue (relisible par load_config)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(config, f, sort_keys=False, allow_unicode=True)
    return path


def resolve_threads(cli_threads: Optional[int] = None) -> int:
    """
    Nombre de threads de travail: PROBIN_THREADS (variable d'environnement
    ou fichier .env) prime sur l'option CLI; 1 par défaut.
    """
    load_dotenv()
    value = os.getenv(THREADS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            logger.warning(f"⚠️ {THREADS_ENV}={value!r} ignored (not an integer)")
    if cli_threads is not None:
        return max(1, int(cli_threads))
    return 1


def spawn_seeds(seed: int, count: int) -> List[int]:
    """Graines enfants déterministes (une par tâche)."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1)[0]) for child in children]


def parallel_map(function: Callable[[T], R], items: Iterable[T], max_workers: int = 1) -> List[R]:
    """map() ordonné, sur un pool de threads quand max_workers > 1."""
    items = list(items)
    if max_workers <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(function, items))


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def text_sha256(text: str) -> str:
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def print_banner():
    """Affiche la bannière du laboratoire."""
    banner = """
    ╔═══════════════════════════════════════════════════════════╗
    ║                                                           ║
    ║            pRobin - p-Laplacian Robin Lab                 ║
    ║                                                           ║
    ║   Principal eigenpairs • Sensitivity • Inverse Robin      ║
    ║                                                           ║
    ╚═══════════════════════════════════════════════════════════╝
    """
    print(banner)
