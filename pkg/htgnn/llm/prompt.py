import hashlib
from dataclasses import dataclass

from htgnn.data.graph import NodeType

PROMPT_TEMPLATE = "Introduction: {description}\nInstruction: {instruction}"

INSTRUCTION = (
    "Summarize this node type for a graph learning model. Answer in exactly this format: "
    "'Type: <type name>. Role: <one sentence on what the nodes represent>. "
    "Relations: <one sentence on how they connect to other node types>. "
    "Dynamics: <one sentence on how they change over time>.'"
)


def stub_description(type_name: str) -> str:
    return f"Nodes of type {type_name} in a heterogeneous temporal graph."


@dataclass(frozen=True)
class TypePrompt:
    type_name: str
    text: str

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


def build_prompt(node_type: NodeType) -> TypePrompt:
    """Render the fixed two-part prompt for one node type"""
    description = node_type.description.strip() or stub_description(node_type.name)
    return TypePrompt(node_type.name, PROMPT_TEMPLATE.format(description=description, instruction=INSTRUCTION))
