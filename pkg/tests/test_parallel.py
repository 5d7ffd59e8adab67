"""Tests for chunk planning, pooled execution and table schemas."""

import pytest

from schemas.tables import TableSchemas
from tools.parallel import ChunkTask, plan_chunks, run_chunks
from tools.streams import Lane, StreamFactory


def chunk_draw(task: ChunkTask) -> list:
    rng = StreamFactory(13).generator(task.chunk, Lane.OFFSPRING)
    return rng.random(task.size).tolist()


class TestPlanChunks:
    def test_last_chunk_is_short(self):
        tasks = plan_chunks(10, 4)
        assert [(t.chunk, t.start, t.size) for t in tasks] == [(0, 0, 4), (1, 4, 4), (2, 8, 2)]

    def test_empty(self):
        assert plan_chunks(0, 5) == []

    @pytest.mark.parametrize("replicas,chunk_size", [(-1, 5), (10, 0)])
    def test_rejects_bad_sizes(self, replicas, chunk_size):
        with pytest.raises(ValueError):
            plan_chunks(replicas, chunk_size)


class TestRunChunks:
    def test_pool_matches_inline(self):
        inline = run_chunks(chunk_draw, 37, 5, workers=1)
        pooled = run_chunks(chunk_draw, 37, 5, workers=3)
        assert inline == pooled
        assert [task.chunk for task, _ in pooled] == list(range(8))
        assert sum(len(values) for _, values in pooled) == 37


class TestTableSchemas:
    def test_header_comment(self):
        assert TableSchemas.get("bpire").header_comment == "# bpire v1"
        assert TableSchemas.get("excursion").columns[-1] == "extinct_at"

    def test_every_schema_is_registered(self):
        assert set(TableSchemas.all()) == {
            "bpire", "walk", "excursion", "ladder", "ladder_tail", "classify", "growth", "conditions",
        }

    def test_unknown_schema(self):
        with pytest.raises(KeyError):
            TableSchemas.get("unknown")
