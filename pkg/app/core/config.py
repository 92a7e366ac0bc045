from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field

# Node count above which per-round edge lists are dropped from traces
TRACE_EDGE_MAX_NODES_DEFAULT = 100_000

# Phase-2 sample buffers are filled in node chunks of this size
SAMPLE_CHUNK_NODES_DEFAULT = 1 << 18


class Settings(BaseSettings):
    LOG_LEVEL: str = Field(default="INFO")
    LOG_DIR: str = Field(default="./logs")
    HOST: str = Field(default="0.0.0.0")
    PORT: int = Field(default=8000)
    OUTPUT_DIR: str = Field(default="./results")
    TRACE_EDGE_MAX_NODES: int = Field(default=TRACE_EDGE_MAX_NODES_DEFAULT)
    LMH_SERIES_MAX_NODES: int = Field(default=250_000)
    HISTORY_SNAPSHOT_MAX_NODES: int = Field(default=10_000)
    SAMPLE_CHUNK_NODES: int = Field(default=SAMPLE_CHUNK_NODES_DEFAULT)
    API_MAX_NODES: int = Field(default=200_000)
    DEFAULT_PARALLEL: int = Field(default=1)

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")


settings = Settings()
