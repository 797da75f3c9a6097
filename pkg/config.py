"""
Configuration settings for the continuum Pólya walk toolkit
"""
import os
from dotenv import load_dotenv

load_dotenv()

class Config:
    """Toolkit configuration"""
    # Simulation defaults
    DEFAULT_ENSEMBLE_SIZE = int(os.getenv('POLYA_ENSEMBLE_SIZE', 10000))
    DEFAULT_SEED = int(os.getenv('POLYA_SEED', 0))
    WORKERS = int(os.getenv('POLYA_WORKERS', 1))
    CHUNK_STEPS = int(os.getenv('POLYA_CHUNK_STEPS', 256))
    TENABILITY_GUARD = float(os.getenv('POLYA_TENABILITY_GUARD', 1e-12))

    # Verification
    Z_THRESHOLD = float(os.getenv('POLYA_Z_THRESHOLD', 4.0))
    MIN_SAMPLES = int(os.getenv('POLYA_MIN_SAMPLES', 100))
    CANONICAL_ENSEMBLE_SIZE = int(os.getenv('POLYA_CANONICAL_ENSEMBLE_SIZE', 100000))

    # Numerics
    FD_STEP = float(os.getenv('POLYA_FD_STEP', 1e-5))
    PDE_TOLERANCE = float(os.getenv('POLYA_PDE_TOLERANCE', 1e-6))

    # Application Settings
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
