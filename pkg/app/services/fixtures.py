"""Library of published coupling matrices shipped with the package."""

import logging
from functools import wraps
from pathlib import Path

from cachetools import LRUCache

from app.models.schemas import MatrixDocument
from app.services.io_formats import parse_matrix

logger = logging.getLogger(__name__)

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"
FIXTURE_SUFFIX = ".cm"

# parsed documents are immutable, so they never need to expire
cache = LRUCache(maxsize=32)


def cached(key_func):
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            key = key_func(*args, **kwargs)
            if key in cache:
                return cache[key]
            result = func(*args, **kwargs)
            cache[key] = result
            return result

        return wrapper

    return decorator


def fixture_path(name: str) -> Path:
    return FIXTURE_DIR / f"{name}{FIXTURE_SUFFIX}"


def list_fixtures() -> list[str]:
    return sorted(path.stem for path in FIXTURE_DIR.glob(f"*{FIXTURE_SUFFIX}"))


def describe_fixture(name: str) -> str:
    """First comment line of the fixture file."""
    for line in fixture_path(name).read_text().splitlines():
        if line.startswith("#"):
            return line.lstrip("#").strip()
    return ""


@cached(lambda name: f"fixture:{name}")
def load_fixture(name: str) -> MatrixDocument | None:
    path = fixture_path(name)
    if name not in list_fixtures():
        return None
    logger.debug("parsing fixture %s", path)
    return parse_matrix(path.read_text())
