"""Multi-hop question answering with decomposed reasoning chains and keyword-enhanced recall."""

from .config import AppConfig
from .decomposer import Decomposer, DecompositionError
from .evaluation import (
    MetricReport,
    answerability_metrics,
    atc,
    atc_from_totals,
    cover_em,
    decomposition_fidelity,
    evaluate,
    gold_recall,
    judge_consistency,
    semantic_acc,
    token_f1,
)
from .gateway import (
    ChatRequest,
    ChatResponse,
    GatewayError,
    LLMGateway,
    OpenAICompatibleBackend,
    ProviderError,
    ScriptedBackend,
    ScriptEntry,
    ScriptMissError,
    TransportError,
    UsageLedger,
    track_usage,
)
from .keywords import KeywordExtractor, build_ek_dataset, substring_match_rate, validity_indicator
from .pipeline import DECPipeline, RunAborted
from .prompts import PromptCatalog, PromptTemplate, TemplateError
from .records import (
    ComplexQuestion,
    DatasetRecord,
    KeywordSet,
    QaHistory,
    ReasoningChain,
    RewrittenQuery,
    RunRecord,
    StepTrace,
    load_dataset,
    load_runs,
)
from .retrieval import (
    BM25Retriever,
    CorpusError,
    Document,
    EnhancedCandidateSet,
    RemoteRetriever,
    RetrievalError,
    hybrid_recall,
    read_corpus,
    select_candidates,
)
from .rewriter import Rewriter

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "BM25Retriever",
    "ChatRequest",
    "ChatResponse",
    "ComplexQuestion",
    "CorpusError",
    "DECPipeline",
    "DatasetRecord",
    "Decomposer",
    "DecompositionError",
    "Document",
    "EnhancedCandidateSet",
    "GatewayError",
    "KeywordExtractor",
    "KeywordSet",
    "LLMGateway",
    "MetricReport",
    "OpenAICompatibleBackend",
    "PromptCatalog",
    "PromptTemplate",
    "ProviderError",
    "QaHistory",
    "ReasoningChain",
    "RemoteRetriever",
    "RetrievalError",
    "RewrittenQuery",
    "Rewriter",
    "RunAborted",
    "RunRecord",
    "ScriptEntry",
    "ScriptMissError",
    "ScriptedBackend",
    "StepTrace",
    "TemplateError",
    "TransportError",
    "UsageLedger",
    "answerability_metrics",
    "atc",
    "atc_from_totals",
    "build_ek_dataset",
    "cover_em",
    "decomposition_fidelity",
    "evaluate",
    "gold_recall",
    "hybrid_recall",
    "judge_consistency",
    "load_dataset",
    "load_runs",
    "read_corpus",
    "select_candidates",
    "semantic_acc",
    "substring_match_rate",
    "token_f1",
    "track_usage",
    "validity_indicator",
]
