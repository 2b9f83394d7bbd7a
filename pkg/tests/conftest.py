from __future__ import annotations

from pathlib import Path

import pytest

from vulneval.context import ContextBundle, FunctionRecord
from vulneval.knowledge import RetrievalMode, RetrievedKnowledge
from vulneval.lexer import Language
from vulneval.prompts import KnowledgeMode
from vulneval.runner import TargetCase

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

CORPUS_DIRS = {
    Language.SOLIDITY: FIXTURES / "corpora" / "solidity",
    Language.JAVA: FIXTURES / "corpora" / "java",
    Language.CPP: FIXTURES / "corpora" / "cpp",
}


def golden_case() -> TargetCase:
    return TargetCase(
        id="golden-1",
        language=Language.SOLIDITY,
        code=(
            "function transferAll(address to) public {\n"
            "    payable(to).transfer(address(this).balance);\n"
            "}"
        ),
        ground_truth_vulnerable=True,
        ground_truth_type="reentrancy",
    )


def golden_knowledge(mode: KnowledgeMode) -> RetrievedKnowledge | None:
    if mode is KnowledgeMode.NONE:
        return None
    if mode is KnowledgeMode.RAW:
        payload = "Reentrancy in withdraw allows draining funds before the balance update."
        return RetrievedKnowledge(item_id="ki-golden", rank=1, score=1.0, mode=RetrievalMode.RAW, payload=payload)
    payload = "KeyConcept: performing external calls before state updates allows reentrant draining of funds."
    return RetrievedKnowledge(item_id="ki-golden", rank=1, score=1.0, mode=RetrievalMode.SUMMARIZED, payload=payload)


def golden_context() -> ContextBundle:
    linked = FunctionRecord(
        qualified_name="Vault.withdraw",
        language=Language.SOLIDITY,
        source_text=(
            "function withdraw(uint256 amount) public {\n"
            "    msg.sender.call{value: amount}(\"\");\n"
            "    balances[msg.sender] -= amount;\n"
            "}"
        ),
        file="Vault.sol",
        span=(10, 13),
    )
    callee = FunctionRecord(
        qualified_name="Vault.balanceOf",
        language=Language.SOLIDITY,
        source_text="function balanceOf(address who) public view returns (uint256) {\n    return balances[who];\n}",
        file="Vault.sol",
        span=(15, 17),
    )
    return ContextBundle(report_linked_code=[linked], callees=[callee])


@pytest.fixture
def solidity_corpus_files() -> list[Path]:
    return sorted(CORPUS_DIRS[Language.SOLIDITY].glob("*.sol"))


@pytest.fixture
def java_corpus_files() -> list[Path]:
    return sorted(CORPUS_DIRS[Language.JAVA].glob("*.java"))


@pytest.fixture
def cpp_corpus_files() -> list[Path]:
    return sorted(CORPUS_DIRS[Language.CPP].glob("*.c"))
