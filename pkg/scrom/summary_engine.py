"""Plain-text summaries for ``compare`` and ``verify``, rendered with Jinja2."""

from typing import Any, Dict, List, Optional

from jinja2 import Environment, StrictUndefined
from pydantic import BaseModel

COMPARE_TEMPLATE = """\
compare: {{ label_a }} vs {{ label_b }} ({{ n_rows }} rows)
{{ "%-16s %-12s %-12s %-12s %-12s %-9s %s"|format("column", "max|a-b|", "mean|a-b|", "max|a|", "max|b|", "log10 a/b", "status") }}
{% for row in rows -%}
{{ "%-16s %-12s %-12s %-12s %-12s %-9s %s"|format(row.column, num(row.max_abs_diff), num(row.mean_abs_diff), num(row.max_a), num(row.max_b), ratio(row.log10_ratio), row.status) }}
{% endfor -%}
{% for failure in failures -%}
FAIL {{ failure }}
{% endfor -%}
result: {{ "PASS" if not failures else "FAIL" }}
"""

VERIFY_TEMPLATE = """\
verify: {{ path }}
{% for name, value in audit.items() -%}
{{ "%-28s"|format(name) }} {{ value }}
{% endfor -%}
{% for check in checks -%}
{{ "%-28s"|format(check.name) }} stored={{ num(check.stored) }} recomputed={{ num(check.recomputed) }} limit={{ num(check.limit) }} {{ check.status }}
{% endfor -%}
result: {{ "PASS" if passed else "FAIL" }}
"""


class ColumnComparison(BaseModel):
    column: str
    max_abs_diff: Optional[float] = None
    mean_abs_diff: Optional[float] = None
    max_a: Optional[float] = None
    max_b: Optional[float] = None
    log10_ratio: Optional[float] = None
    status: str = "ok"


class AuditCheck(BaseModel):
    name: str
    stored: Optional[float] = None
    recomputed: Optional[float] = None
    limit: Optional[float] = None
    status: str = "ok"


def _num(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.3e}"


def _ratio(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:+.2f}"


class SummaryEngine:
    def __init__(self):
        self.env = Environment(undefined=StrictUndefined, keep_trailing_newline=True)
        self.env.globals.update(num=_num, ratio=_ratio)
        self._compare = self.env.from_string(COMPARE_TEMPLATE)
        self._verify = self.env.from_string(VERIFY_TEMPLATE)

    def render_compare(
        self,
        label_a: str,
        label_b: str,
        n_rows: int,
        rows: List[ColumnComparison],
        failures: List[str],
    ) -> str:
        return self._compare.render(label_a=label_a, label_b=label_b, n_rows=n_rows, rows=rows, failures=failures)

    def render_verify(self, path: str, audit: Dict[str, Any], checks: List[AuditCheck], passed: bool) -> str:
        return self._verify.render(path=path, audit=audit, checks=checks, passed=passed)
