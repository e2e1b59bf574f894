import logging
import os
from typing import Callable, List, Optional, Union
from dotenv import load_dotenv
from src.errors import ConfigError
load_dotenv()

LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
ENV_ERRORS: List[str] = []


def env_number(name: str, default: str, cast: Callable[[str], Union[int, float]]=float) -> Union[int, float]:
    """Parse a numeric environment variable; a malformed value is recorded and the default used."""
    raw = os.getenv(name, default)
    try:
        return cast(raw)
    except ValueError:
        ENV_ERRORS.append(f"{name} must be {'an integer' if cast is int else 'a number'}, got {raw!r}")
        return cast(default)


class Config:
    LOG_LEVEL = os.getenv('WIRERECON_LOG')
    OUTPUT_DIR = os.getenv('WIRERECON_OUTPUT_DIR', './out')
    SEED = env_number('WIRERECON_SEED', '0', int)
    RADIUS_MM = env_number('WIRERECON_RADIUS_MM', '2.0')
    MAX_SEGMENTS = env_number('WIRERECON_MAX_SEGMENTS', '64', int)
    DELTA_U_MM = env_number('WIRERECON_DELTA_U_MM', '2.0')
    DELTA_U_PX = env_number('WIRERECON_DELTA_U_PX', '1.0')
    RANSAC_THRESHOLD_PX = env_number('WIRERECON_RANSAC_THRESHOLD_PX', '2.0')
    RANSAC_ITERATIONS = env_number('WIRERECON_RANSAC_ITERATIONS', '1000', int)
    LWM_NEIGHBORHOOD = env_number('WIRERECON_LWM_NEIGHBORHOOD', '12', int)
    STOP_THRESHOLD = env_number('WIRERECON_STOP_THRESHOLD', '0.5')
    FRAME_SIZE = env_number('WIRERECON_FRAME_SIZE', '64', int)
    IMAGE_SIZE = env_number('WIRERECON_IMAGE_SIZE', '1024', int)
    LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

    @classmethod
    def validate(cls):
        if ENV_ERRORS:
            raise ConfigError('; '.join(ENV_ERRORS))
        if cls.LOG_LEVEL is not None and cls.LOG_LEVEL.upper() not in LOG_LEVELS:
            raise ConfigError(f'WIRERECON_LOG must be one of {LOG_LEVELS}, got {cls.LOG_LEVEL!r}')
        if cls.RADIUS_MM <= 0:
            raise ConfigError('WIRERECON_RADIUS_MM must be positive')
        if cls.MAX_SEGMENTS < 1:
            raise ConfigError('WIRERECON_MAX_SEGMENTS must be at least 1')
        if cls.DELTA_U_MM <= 0 or cls.DELTA_U_PX <= 0:
            raise ConfigError('WIRERECON_DELTA_U_MM and WIRERECON_DELTA_U_PX must be positive')
        if cls.RANSAC_THRESHOLD_PX <= 0 or cls.RANSAC_ITERATIONS < 1:
            raise ConfigError('RANSAC threshold must be positive and iterations at least 1')
        if cls.LWM_NEIGHBORHOOD < 6:
            raise ConfigError('WIRERECON_LWM_NEIGHBORHOOD must be at least 6')
        if not 0.0 < cls.STOP_THRESHOLD < 1.0:
            raise ConfigError('WIRERECON_STOP_THRESHOLD must lie in (0, 1)')
        if cls.FRAME_SIZE < 8 or cls.IMAGE_SIZE < cls.FRAME_SIZE:
            raise ConfigError('WIRERECON_FRAME_SIZE must be >= 8 and <= WIRERECON_IMAGE_SIZE')

    @classmethod
    def resolve_log_level(cls, cli_level: Optional[str]=None) -> str:
        if cls.LOG_LEVEL:
            return cls.LOG_LEVEL.upper()
        if cli_level:
            return cli_level.upper()
        return 'INFO'

    @classmethod
    def configure_logging(cls, cli_level: Optional[str]=None) -> str:
        level = cls.resolve_log_level(cli_level)
        logging.basicConfig(level=getattr(logging, level), format=cls.LOG_FORMAT, force=True)
        return level
