"""
Prompt Models - templates and rendered prompts
"""

from pydantic import BaseModel, ConfigDict, Field, model_validator

CONTEXT_PLACEHOLDER = "<m1..mn>"
CANDIDATE_PLACEHOLDER = "<mi>"


class PromptTemplate(BaseModel):
    """
    `prefix_literal <m1>item_separator<m2>...<mn> candidate_separator <mi> suffix_literal`
    """

    model_config = ConfigDict(frozen=True)

    name: str = Field(min_length=1)
    prefix_literal: str = ""
    item_separator: str = ", "
    candidate_separator: str = ", "
    suffix_literal: str = ""

    @model_validator(mode="after")
    def _check_separators(self) -> "PromptTemplate":
        if not self.item_separator or not self.candidate_separator:
            raise ValueError(f"template {self.name}: separators must be non-empty")
        return self

    @property
    def pattern(self) -> str:
        return (
            f"{self.prefix_literal}{CONTEXT_PLACEHOLDER}"
            f"{self.candidate_separator}{CANDIDATE_PLACEHOLDER}{self.suffix_literal}"
        )


class Prompt(BaseModel):
    model_config = ConfigDict(frozen=True)

    prefix_text: str
    full_text: str
    candidate_item: int = 0

    @model_validator(mode="after")
    def _check_split(self) -> "Prompt":
        if not self.full_text.startswith(self.prefix_text):
            raise ValueError("full_text must start with prefix_text")
        return self

    @property
    def continuation_text(self) -> str:
        return self.full_text[len(self.prefix_text):]
