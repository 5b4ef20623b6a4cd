import os
from fractions import Fraction
from dotenv import load_dotenv

load_dotenv()

class Config:
    # Paths
    RESULTS_DIR: str = os.getenv("RESULTS_DIR", "./data/results")

    # Reduction
    REDUCER: str = os.getenv("REDUCER", "internal")
    LLL_DELTA: Fraction = Fraction(os.getenv("LLL_DELTA", "3/4"))
    EXTERNAL_TIMEOUT: float = float(os.getenv("EXTERNAL_TIMEOUT", "3600"))
    INTEGRITY_SAMPLES: int = int(os.getenv("INTEGRITY_SAMPLES", "8"))
    EXACT_DET_MAX_DIM: int = int(os.getenv("EXACT_DET_MAX_DIM", "160"))
    ENUM_MAX_DIM: int = int(os.getenv("ENUM_MAX_DIM", "30"))

    # Scheme / knapsack guards
    KEYGEN_MAX_TRIES: int = int(os.getenv("KEYGEN_MAX_TRIES", "100"))
    BRUTE_FORCE_LIMIT: int = int(os.getenv("BRUTE_FORCE_LIMIT", "16"))

    # Harness
    SEED: int = int(os.getenv("SEED", "0"))
    WORKERS: int = int(os.getenv("WORKERS", "1"))
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

config = Config()
