"""Versioned CSV layouts of the experiment outputs."""

from dataclasses import dataclass
from typing import Dict, Tuple


@dataclass(frozen=True)
class TableSchema:
    """Column layout of one CSV artifact."""

    name: str
    version: int
    columns: Tuple[str, ...]

    @property
    def header_comment(self) -> str:
        return f"# {self.name} v{self.version}"


class TableSchemas:
    """Collection of CSV schemas for the different experiment kinds."""

    BPIRE = TableSchema(
        "bpire", 1,
        ("replica", "generation", "population_or_log", "is_log", "hit_zero_at"),
    )

    WALK = TableSchema("walk", 1, ("replica", "step", "position"))

    EXCURSION = TableSchema(
        "excursion", 1,
        ("replica", "steps", "returned", "left_first", "coupled", "coupling_match", "extinct_at"),
    )

    LADDER = TableSchema("ladder", 1, ("replica", "n", "L_n"))

    LADDER_TAIL = TableSchema("ladder_tail", 1, ("n", "survival", "standard_error", "scaled", "exact"))

    CLASSIFY = TableSchema("classify", 1, ("horizon", "fraction", "ci_lo", "ci_hi"))

    GROWTH = TableSchema("growth", 1, ("horizon", "fraction", "ci_lo", "ci_hi"))

    CONDITIONS = TableSchema("conditions", 1, ("criterion", "condition", "passed", "quantity"))

    @classmethod
    def all(cls) -> Dict[str, TableSchema]:
        return {
            schema.name: schema
            for schema in vars(cls).values()
            if isinstance(schema, TableSchema)
        }

    @classmethod
    def get(cls, name: str) -> TableSchema:
        schemas = cls.all()
        if name not in schemas:
            raise KeyError(f"Unknown table schema: {name}")
        return schemas[name]
