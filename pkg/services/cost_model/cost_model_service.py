"""Power and on-chip area estimates for crossbar networks.

Component data is held exactly as ``Decimal`` SI values (watts, square
metres). Estimates instantiate components per layer transition and sum them;
reports are converted to watts and square micrometres only on output.

Per-Transition Composition (rows × cols)
=========================================
::
    crossbar            1                scaled linearly from the 4x10 datum
    weight_control      cols             (or rows × cols with scope "cell")
    current_buffer      cols
    activation circuit  cols             sigmoid for sigmoid/tanh,
                                         approx_sigmoid_tanh for approximate kinds
    voltage_buffer      cols
    voltage_shift       policy           none | per tanh neuron | per output neuron | per layer

    latency_slots = Σ len(ReadoutSchedule.sequential(cols))   the crossbar readout schedule, one column per slot

Key Behaviours
===============
- ``lookup`` returns the tabulated entries unchanged.
- Estimates are additive: ``compose(a, b)`` totals equal ``a`` totals plus ``b`` totals.
- The reference configuration (two 4x10 sigmoid crossbars) is reported with its
  deviation from the published 1072.4 mW / 4839.9 µm² totals; the
  published composition is not recoverable, so no equality is asserted.
"""

from decimal import Decimal

from common.enums import ActivationKind, CostComponent, VoltageShiftPolicy
from common.exceptions import InputError
from common.models import ReadoutSchedule
from common.schemas import (
    CostEntry,
    CostLineItem,
    CostPolicy,
    CostReport,
    CostReportDocument,
    ExperimentConfig,
    NetworkConfig,
    ReferenceComparison,
)

__all__ = [
    "COST_TABLE",
    "REFERENCE_AREA",
    "REFERENCE_POWER",
    "compose",
    "estimate",
    "estimate_transitions",
    "lookup",
    "reference_estimate",
    "render_table",
    "scale_crossbar",
    "to_document",
    "with_reference",
]

UM2_PER_M2 = Decimal(10) ** 12
REFERENCE_CELLS = 40

COST_TABLE: dict[CostComponent, CostEntry] = {
    component: CostEntry(component=component.value, power=Decimal(power), area=Decimal(area))
    for component, power, area in (
        (CostComponent.CROSSBAR_4X10, "5e-6", "1.36e-12"),
        (CostComponent.WEIGHT_CONTROL, "11.4e-6", "7.98e-12"),
        (CostComponent.SIGMOID, "11.4e-6", "184e-12"),
        (CostComponent.CURRENT_BUFFER, "149e-6", "280e-12"),
        (CostComponent.VOLTAGE_BUFFER, "451e-6", "1954.6e-12"),
        (CostComponent.VOLTAGE_SHIFT, "3.952e-3", "2581.4e-12"),
        (CostComponent.APPROX_SIGMOID_TANH, "41.19e-3", "2118e-12"),
    )
}

REFERENCE_POWER = Decimal("1072.4e-3")
REFERENCE_AREA = Decimal("4839.9e-12")
REFERENCE_TRANSITIONS = ((4, 10, ActivationKind.SIGMOID), (4, 10, ActivationKind.SIGMOID))


def lookup(component: CostComponent | str) -> CostEntry:
    """Tabulated power/area of one component.

    Raises:
        ConfigurationError: Unknown component name.
    """
    return COST_TABLE[CostComponent.from_str(str(component))]


def scale_crossbar(rows: int, cols: int) -> CostEntry:
    """Crossbar cost scaled linearly in cell count from the 40-cell datum."""
    if rows < 1 or cols < 1:
        raise InputError(f"Crossbar needs at least one row and column, got {rows}x{cols}")
    reference = COST_TABLE[CostComponent.CROSSBAR_4X10]
    factor = Decimal(rows * cols) / REFERENCE_CELLS
    return CostEntry(
        component=f"crossbar_{rows}x{cols}", power=reference.power * factor, area=reference.area * factor
    )


def _activation_component(kind: ActivationKind) -> CostComponent:
    return CostComponent.APPROX_SIGMOID_TANH if kind.is_approximate else CostComponent.SIGMOID


def _voltage_shifts(kind: ActivationKind, cols: int, policy: VoltageShiftPolicy) -> int:
    match policy:
        case VoltageShiftPolicy.NONE:
            return 0
        case VoltageShiftPolicy.PER_TANH_NEURON:
            return cols if kind.is_tanh_family else 0
        case VoltageShiftPolicy.PER_OUTPUT_NEURON:
            return cols
        case VoltageShiftPolicy.PER_LAYER:
            return 1


def _composition_rule(policy: CostPolicy) -> str:
    return (
        f"per_transition;weight_control={policy.weight_control_scope};"
        f"voltage_shift={policy.voltage_shift.value}"
    )


def _assumptions(policy: CostPolicy) -> list[str]:
    scope = "per crossbar column" if policy.weight_control_scope == "column" else "per crossbar cell"
    return [
        "Crossbar power and area scale linearly with cell count from the 4x10 datum",
        f"One weight-control circuit {scope}",
        "One current buffer, activation circuit and voltage buffer per output neuron",
        f"Voltage shifts counted {policy.voltage_shift.value.replace('_', ' ')}",
    ]


def _add(items: dict[str, CostLineItem], entry: CostEntry, count: int) -> None:
    if count == 0:
        return
    existing = items.get(entry.component)
    total = count + (existing.count if existing is not None else 0)
    items[entry.component] = CostLineItem(
        component=entry.component, count=total, unit_power=entry.power, unit_area=entry.area
    )


def estimate_transitions(
    transitions: list[tuple[int, int, ActivationKind]], policy: CostPolicy | None = None
) -> CostReport:
    """Cost of explicit ``(rows, cols, activation)`` layer transitions."""
    policy = policy or CostPolicy()
    items: dict[str, CostLineItem] = {}
    for rows, cols, kind in transitions:
        kind = policy.activation_override or kind
        weight_controls = cols if policy.weight_control_scope == "column" else rows * cols
        _add(items, scale_crossbar(rows, cols), 1)
        _add(items, COST_TABLE[CostComponent.WEIGHT_CONTROL], weight_controls)
        _add(items, COST_TABLE[CostComponent.CURRENT_BUFFER], cols)
        _add(items, COST_TABLE[_activation_component(kind)], cols)
        _add(items, COST_TABLE[CostComponent.VOLTAGE_BUFFER], cols)
        _add(items, COST_TABLE[CostComponent.VOLTAGE_SHIFT], _voltage_shifts(kind, cols, policy.voltage_shift))
    return CostReport(
        itemized=list(items.values()),
        latency_slots=sum(len(ReadoutSchedule.sequential(cols)) for _, cols, _ in transitions),
        composition_rule=_composition_rule(policy),
        assumptions=_assumptions(policy),
    )


def estimate(
    config: NetworkConfig, activation: ActivationKind | None = None, policy: CostPolicy | None = None
) -> CostReport:
    """Cost of a network; ``activation`` overrides every layer's kind when given."""
    sizes = config.layer_sizes
    transitions = [
        (sizes[index], sizes[index + 1], activation or kind)
        for index, kind in enumerate(config.activation_per_layer)
    ]
    return estimate_transitions(transitions, policy)


def compose(*reports: CostReport) -> CostReport:
    """Sum reports component by component."""
    items: dict[str, CostLineItem] = {}
    for report in reports:
        for item in report.itemized:
            _add(
                items,
                CostEntry(component=item.component, power=item.unit_power, area=item.unit_area),
                item.count,
            )
    rules = list(dict.fromkeys(report.composition_rule for report in reports))
    assumptions = list(dict.fromkeys(line for report in reports for line in report.assumptions))
    return CostReport(
        itemized=list(items.values()),
        latency_slots=sum(report.latency_slots for report in reports),
        composition_rule="+".join(rules),
        assumptions=assumptions,
    )


def _deviation_pct(value: Decimal, reference: Decimal) -> float:
    return float((value - reference) / reference * 100)


def with_reference(report: CostReport) -> CostReport:
    """Attach the deviation from the published reference totals."""
    reference = ReferenceComparison(
        power=REFERENCE_POWER,
        area=REFERENCE_AREA,
        power_deviation_pct=_deviation_pct(report.total_power, REFERENCE_POWER),
        area_deviation_pct=_deviation_pct(report.total_area, REFERENCE_AREA),
    )
    return report.model_copy(update={"reference": reference})


def reference_estimate(policy: CostPolicy | None = None) -> CostReport:
    """Two 4x10 sigmoid crossbars, compared against the published totals."""
    return with_reference(estimate_transitions(list(REFERENCE_TRANSITIONS), policy))


# ============================================================================
# OUTPUT
# ============================================================================


def to_document(report: CostReport, experiment: ExperimentConfig | None = None) -> CostReportDocument:
    """JSON view in watts and square micrometres."""
    reference = None
    if report.reference is not None:
        reference = {
            "power_w": float(report.reference.power),
            "area_um2": float(report.reference.area * UM2_PER_M2),
            "power_deviation_pct": report.reference.power_deviation_pct,
            "area_deviation_pct": report.reference.area_deviation_pct,
        }
    return CostReportDocument(
        itemized=[
            {
                "component": item.component,
                "count": item.count,
                "unit_power_w": float(item.unit_power),
                "unit_area_um2": float(item.unit_area * UM2_PER_M2),
                "subtotal_power_w": float(item.subtotal_power),
                "subtotal_area_um2": float(item.subtotal_area * UM2_PER_M2),
            }
            for item in report.itemized
        ],
        total_power_w=float(report.total_power),
        total_area_um2=float(report.total_area * UM2_PER_M2),
        latency_slots=report.latency_slots,
        composition_rule=report.composition_rule,
        assumptions=report.assumptions,
        reference=reference,
        experiment=experiment,
    )


def render_table(report: CostReport) -> str:
    """Aligned plain-text table of the itemized report."""
    header = ("component", "count", "power_mW", "area_um2")
    rows = [
        (
            item.component,
            str(item.count),
            f"{float(item.subtotal_power * 1000):.6g}",
            f"{float(item.subtotal_area * UM2_PER_M2):.6g}",
        )
        for item in report.itemized
    ]
    rows.append(
        ("total", "", f"{float(report.total_power * 1000):.6g}", f"{float(report.total_area * UM2_PER_M2):.6g}")
    )
    widths = [max(len(row[col]) for row in [header, *rows]) for col in range(len(header))]

    def align(row: tuple[str, ...]) -> str:
        cells = zip(row, widths, strict=True)
        return "  ".join(cell.ljust(width) if i == 0 else cell.rjust(width) for i, (cell, width) in enumerate(cells))

    lines = [align(header), "  ".join("-" * width for width in widths), *(align(row) for row in rows)]
    lines.append(f"latency: {report.latency_slots} column slots")
    if report.reference is not None:
        lines.append(
            f"reference: {float(report.reference.power * 1000):.1f} mW, "
            f"{float(report.reference.area * UM2_PER_M2):.1f} um2 "
            f"(deviation {report.reference.power_deviation_pct:+.1f}% power, "
            f"{report.reference.area_deviation_pct:+.1f}% area)"
        )
    return "\n".join(lines)
