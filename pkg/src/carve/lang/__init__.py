"""Language-module registry.

A language module analyses the code that follows an implicit mapping.  It
exposes ``parse``, ``classify_construct``, ``construct_extent``,
``enclosing_switch``, ``plan_switch_case``, ``plan_conditional``,
``count_functions`` and the ``AnalysisError`` family it raises.
"""

from carve.lang import c

LANGUAGES = {"c": c}


def get_language(name: str):
    try:
        return LANGUAGES[name]
    except KeyError:
        raise KeyError(f"no language module named {name!r}") from None
