"""Shared test fixtures: the two-component interface-addition scenario.

``fig_pair()`` returns (old, new) model versions where the new version wires
two existing Components together: two Ports, a Connector with two end edges
and two part edges, and a Requirement satisfying the Connector. The change
amounts to 4 created nodes and 7 created edges with the two Components as
boundary, which several pipeline tests assert against.
"""

from opminer.modeldiff import EdgeType, MetaModel, ModelVersion

FIXTURE_METAMODEL = MetaModel(
    frozenset(["Package", "Component", "SwImplementation", "Port", "Connector", "Requirement"]),
    (
        EdgeType("contains_component", "Package", "Component", containment=True),
        EdgeType("contains_swimpl", "Package", "SwImplementation", containment=True),
        EdgeType("contains_connector", "Package", "Connector", containment=True),
        EdgeType("contains_requirement", "Package", "Requirement", containment=True),
        EdgeType("port", "Component", "Port", containment=True),
        EdgeType("end", "Connector", "Port"),
        EdgeType("part", "Connector", "Component"),
        EdgeType("implementation", "Component", "SwImplementation"),
        EdgeType("satisfies", "Requirement", "Connector"),
        EdgeType("traces", "Requirement", "Component"),
    ),
)


def fig_pair() -> tuple[ModelVersion, ModelVersion]:
    old = ModelVersion.of([("c1", "Component"), ("c2", "Component")])
    new = ModelVersion.of(
        [
            ("c1", "Component"),
            ("c2", "Component"),
            ("p1", "Port"),
            ("p2", "Port"),
            ("k1", "Connector"),
            ("r1", "Requirement"),
        ],
        [
            ("c1", "p1", "port"),
            ("c2", "p2", "port"),
            ("k1", "p1", "end"),
            ("k1", "p2", "end"),
            ("k1", "c1", "part"),
            ("k1", "c2", "part"),
            ("r1", "k1", "satisfies"),
        ],
    )
    return old, new
