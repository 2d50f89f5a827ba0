import os
from functools import lru_cache

from pydantic import BaseModel, Field

SWEEP_THREADS_ENV = "EMCM_SWEEP_THREADS"


class Settings(BaseModel):
    sweep_threads: int = Field(default=1, ge=1, le=256)

    @classmethod
    def from_env(cls) -> "Settings":
        raw = os.environ.get(SWEEP_THREADS_ENV)
        if raw is None or not raw.strip():
            return cls()
        return cls(sweep_threads=raw.strip())


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings.from_env()
