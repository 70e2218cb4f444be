# Configuration module for the CR calculus engine
"""
Loader for conventions.json: default seed, random-polynomial parameters,
rescaling samples per n and weight samples per k.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)

CONVENTIONS_PATH = Path(__file__).parent / "conventions.json"

DEFAULT_CONVENTIONS: Dict[str, Any] = {
    "default_seed": 7,
    "random_polynomial": {"degree": 3, "terms": 4, "coefficient_range": 3},
    "upsilon_samples": {"1": ["z1*zb1"], "2": ["z1*zb1 - z2*zb2"]},
    "weight_samples": {str(k): ["1/2", "-1", "2", "-3/2", "3/2"] for k in (1, 2, 3)},
    "k_max": 3,
    "flat_identity_k_max": 4,
    "scat_weights": ["0", "-1", "-1/2", "1/3"],
    "ambient_weights": [["0", "0"], ["1", "0"]],
    "obstruction_samples": 5,
}


def load_conventions(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load the engine conventions, falling back to the built-in defaults.

    Args:
        path (str, optional): alternative JSON file

    Returns:
        Dict with every key of DEFAULT_CONVENTIONS
    """
    target = Path(path) if path else CONVENTIONS_PATH
    conventions = dict(DEFAULT_CONVENTIONS)
    try:
        if target.exists():
            with open(target, "r", encoding="utf-8") as f:
                conventions.update(json.load(f))
            logger.debug(f"Loaded conventions from {target}")
        else:
            logger.warning(f"Conventions file not found at {target}; using defaults")
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Failed to load conventions: {str(e)}")
    return conventions
