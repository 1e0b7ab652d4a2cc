from __future__ import annotations

import pytest

from decqa import BM25Retriever, DECPipeline, LLMGateway, ScriptedBackend
from decqa.fixtures import generate_world

ACCEPTANCE_LINES: list[str] = []


def make_pipeline(world, corpus=None, **params) -> DECPipeline:
    gateway = LLMGateway(ScriptedBackend(world.script))
    retriever = BM25Retriever().fit(world.corpus if corpus is None else corpus)
    return DECPipeline(gateway=gateway, retriever=retriever, **params).fit()


@pytest.fixture(scope="session")
def world2():
    return generate_world(7, 20, hops=2)


@pytest.fixture(scope="session")
def world3():
    return generate_world(11, 6, hops=3)


@pytest.fixture(scope="session")
def world_mixed():
    return generate_world(3, 10, hops=2, n_unanswerable=3)


@pytest.fixture(scope="session")
def runs2(world2):
    return make_pipeline(world2).run_batch(world2.dataset)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def script_gateway(items, catalog=None) -> LLMGateway:
    """Gateway answering ``(template, bindings, response)`` triples."""
    from decqa.gateway import ScriptEntry
    from decqa.prompts import PromptCatalog

    catalog = catalog or PromptCatalog()
    entries = [ScriptEntry(t, catalog[t].digest(b), text) for t, b, text in items]
    return LLMGateway(ScriptedBackend(entries), catalog)


class SequenceBackend:
    """Returns queued responses in order, whatever the request."""

    def __init__(self, texts):
        from decqa.gateway import ChatResponse

        self._responses = [ChatResponse(t, 1, 1) for t in texts]
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        return self._responses.pop(0)
