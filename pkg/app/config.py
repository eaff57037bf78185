import os
from fractions import Fraction

from dotenv import load_dotenv

from app.andl.units import parse_rate, parse_time

load_dotenv()


class Settings:
    """Simulator defaults, overridable through the environment or a .env file"""

    # Application Settings
    ENVIRONMENT: str = os.getenv("ENVIRONMENT", "development")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    OUTPUT_DIR: str = os.getenv("OUTPUT_DIR", "results")
    MAX_JOBS: int = int(os.getenv("MAX_JOBS", "1"))

    # Run defaults
    DEFAULT_SEED: int = int(os.getenv("DEFAULT_SEED", "1"))
    DEFAULT_SIM_TIME: int = parse_time(os.getenv("DEFAULT_SIM_TIME", "1s"))

    # Device defaults (see DESIGN.md)
    SWITCH_PROCESSING_DELAY: int = parse_time(os.getenv("SWITCH_PROCESSING_DELAY", "8us"))
    GATEWAY_PROCESSING_DELAY: int = parse_time(os.getenv("GATEWAY_PROCESSING_DELAY", "0us"))
    DEFAULT_ETH_RATE: int = parse_rate(os.getenv("DEFAULT_ETH_RATE", "100Mb/s"))
    DEFAULT_CAN_BITRATE: int = parse_rate(os.getenv("DEFAULT_CAN_BITRATE", "500kb/s"))

    # Clock model
    CLOCK_TICK: int = parse_time(os.getenv("CLOCK_TICK", "80ns"))
    SYNC_PRECISION: int = parse_time(os.getenv("SYNC_PRECISION", "500ns"))
    SYNC_INTERVAL: int = parse_time(os.getenv("SYNC_INTERVAL", "1ms"))

    # Shaping
    AVB_CLASS_A_FRACTION: Fraction = Fraction(os.getenv("AVB_CLASS_A_FRACTION", "0.75"))
    AVB_CLASS_B_FRACTION: Fraction = Fraction(os.getenv("AVB_CLASS_B_FRACTION", "0.20"))
    SCHEDULE_CYCLE_CAP: int = parse_time(os.getenv("SCHEDULE_CYCLE_CAP", "1s"))

    # Gateways and statistics
    POOL_MAX_PAYLOAD: int = int(os.getenv("POOL_MAX_PAYLOAD", "1500"))
    STATS_WINDOW: int = int(os.getenv("STATS_WINDOW", "100"))

    @classmethod
    def validate(cls) -> bool:
        """Validate configuration consistency"""
        if not 0 < cls.AVB_CLASS_A_FRACTION < 1 or not 0 < cls.AVB_CLASS_B_FRACTION < 1:
            raise ValueError("AVB idle-slope fractions must lie strictly between 0 and 1")
        if cls.DEFAULT_ETH_RATE <= 0 or cls.DEFAULT_CAN_BITRATE <= 0:
            raise ValueError("link rates must be positive")
        if cls.CLOCK_TICK < 1:
            raise ValueError("CLOCK_TICK must be at least 1ps")
        if cls.STATS_WINDOW < 1:
            raise ValueError("STATS_WINDOW must be at least 1")
        return True


settings = Settings()
