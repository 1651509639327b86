"""Placement targets: the edge executor or a cloud function memory size."""

from __future__ import annotations

from dataclasses import dataclass

MIN_MEMORY_MB = 256
MAX_MEMORY_MB = 3008

# 19 Lambda memory sizes, 640..2944 MB in 128 MB steps.
STUDIED_MEMORY_MB = tuple(range(640, 2945, 128))


@dataclass(frozen=True, order=False)
class ContainerConfig:
    kind: str
    memory_mb: int | None = None

    def __post_init__(self):
        if self.kind == "edge":
            if self.memory_mb is not None:
                raise ValueError("edge config carries no memory size")
        elif self.kind == "cloud":
            if self.memory_mb is None or int(self.memory_mb) != self.memory_mb:
                raise ValueError(f"cloud config needs an integer memory size, got {self.memory_mb!r}")
            if not MIN_MEMORY_MB <= self.memory_mb <= MAX_MEMORY_MB:
                raise ValueError(
                    f"memory {self.memory_mb} MB outside [{MIN_MEMORY_MB}, {MAX_MEMORY_MB}]"
                )
        else:
            raise ValueError(f"unknown config kind {self.kind!r}")

    @classmethod
    def edge(cls) -> "ContainerConfig":
        return cls("edge")

    @classmethod
    def cloud(cls, memory_mb: int) -> "ContainerConfig":
        return cls("cloud", int(memory_mb))

    @classmethod
    def parse(cls, text) -> "ContainerConfig":
        """Parse ``"edge"`` or an integer MB value (string or int)."""
        if isinstance(text, ContainerConfig):
            return text
        if isinstance(text, str):
            text = text.strip()
            if text.lower() == "edge":
                return cls.edge()
            try:
                value = float(text)
            except ValueError:
                raise ValueError(f"invalid container config {text!r}") from None
        else:
            value = float(text)
        if value != int(value):
            raise ValueError(f"memory size must be an integer, got {text!r}")
        return cls.cloud(int(value))

    @property
    def is_edge(self) -> bool:
        return self.kind == "edge"

    def sort_key(self):
        """Cloud configs by memory, edge last."""
        return (1, 0) if self.is_edge else (0, self.memory_mb)

    def __str__(self):
        return "edge" if self.is_edge else str(self.memory_mb)


EDGE = ContainerConfig.edge()


def studied_configs(include_edge: bool = True) -> list[ContainerConfig]:
    configs = [ContainerConfig.cloud(m) for m in STUDIED_MEMORY_MB]
    if include_edge:
        configs.append(EDGE)
    return configs
