"""Closed-form expressions in x, y for configs and manufactured data.

Expressions are evaluated with numpy in a restricted namespace: variables
x and y, the imaginary unit as ``i`` or ``j``, constants pi and e, and the
usual elementary functions. No builtins are reachable.
"""

import numpy as np

__all__ = ["ExpressionError", "compile_expression", "parse_complex"]


class ExpressionError(ValueError):
    """Expression failed to parse or evaluate."""


_NAMESPACE = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan,
    "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
    "real": np.real, "imag": np.imag, "conj": np.conj,
    "minimum": np.minimum, "maximum": np.maximum,
    "pi": np.pi, "e": np.e, "i": 1j, "j": 1j,
}


def compile_expression(source):
    """Compile an expression of x and y into a vectorized callable."""
    try:
        code = compile(source, "<expression>", "eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse expression '{source}': {exc}") from exc
    for name in code.co_names:
        if name not in _NAMESPACE and name not in ("x", "y"):
            raise ExpressionError(f"unknown name '{name}' in expression '{source}'")

    def fn(x, y):
        env = dict(_NAMESPACE)
        env["x"] = x
        env["y"] = y
        try:
            out = eval(code, {"__builtins__": {}}, env)
        except Exception as exc:
            raise ExpressionError(f"expression '{source}' failed: {exc}") from exc
        return np.broadcast_to(np.asarray(out), np.shape(x)).copy() \
            if np.shape(x) else out

    # fail fast on expressions that only break at evaluation time
    fn(np.array([0.25]), np.array([0.25]))
    return fn


def parse_complex(text):
    """Parse a complex constant; accepts both 'i' and 'j' notation."""
    cleaned = text.strip().replace(" ", "")
    cleaned = cleaned.replace("i", "j")
    try:
        return complex(cleaned)
    except ValueError as exc:
        raise ExpressionError(f"cannot parse complex constant '{text}'") from exc
