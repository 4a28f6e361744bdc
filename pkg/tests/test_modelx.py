import pytest

from model_extractor import (ExtractedModel, ModelTransition, aux_name,
                             disambiguate, extract_model)
from tableau_builder import build_tableau
from utils.errors import EmptyTableau
from utils.logic.formula import AR, FALSE, TRUE, AtomLit, Not, Unary, conj, ex_any, to_nnf
from utils.logic.model_checker import holds_initially
from utils.vocab.sorts import Sort
from utils.vocab.terms import Var, simple_atom
from utils.vocab.valuation import Valuation

D2 = Sort.range(0, 1)
SORTS = {"x": D2}
P = AtomLit(simple_atom(Var("x", D2), 1))


def tableau_for(f, k=1, **kwargs):
    return build_tableau(conj([to_nnf(f, k), AR(FALSE, ex_any(TRUE, k))]), SORTS, k, **kwargs)


def test_extracted_model_satisfies_the_formula():
    f = conj([Unary("AG", Unary("AF", P)), Unary("AG", Unary("AF", Not(P)))])
    model = extract_model(tableau_for(f))
    assert holds_initially(model.to_model(), f)[0]
    assert all(model.outgoing(s) for s in range(model.size))
    assert {label["x"] for label in model.labels} == {0, 1}


def test_fragments_record_their_eventualities():
    model = extract_model(tableau_for(Unary("AF", P)))
    assert model.fragments
    fulfilled = {str(e) for f in model.fragments.values() for e in f.fulfilled}
    assert "AF x = 1" in fulfilled
    assert all(f.depth >= 0 for f in model.fragments.values())
    exported = model.to_dict()
    assert len(exported["states"]) == model.size
    assert exported["aux_variable"] is None


def test_one_initial_state_per_valuation():
    t = tableau_for(Unary("AG", Unary("AF", P)), initials=[Valuation(x=0), Valuation(x=1)])
    model = extract_model(t)
    assert sorted(model.labels[s]["x"] for s in model.initial) == [0, 1]


def test_extraction_needs_a_live_root():
    t = tableau_for(Unary("AF", P))
    t.nodes[t.root].alive = False
    with pytest.raises(EmptyTableau):
        extract_model(t)


def duplicated_model():
    sorts = {"a": D2}
    labels = [Valuation(a=0), Valuation(a=0), Valuation(a=1)]
    transitions = [ModelTransition(0, 1, 2), ModelTransition(1, 1, 0), ModelTransition(2, 1, 1)]
    return ExtractedModel(labels, transitions, [0], 1, sorts)


def test_duplicate_labels_get_an_auxiliary_value():
    model = disambiguate(duplicated_model())
    assert model.aux_variable == "x"
    assert model.aux_domain == (0, 1)
    assert model.labels == [Valuation(a=0, x=0), Valuation(a=0, x=1), Valuation(a=1, x=0)]
    assigns = {t.as_tuple(): t.assign for t in model.transitions}
    assert assigns == {(0, 1, 2): None, (2, 1, 1): 1, (1, 1, 0): 0}
    assert model.sorts["x"] == Sort.range(0, 1)


def test_assignments_show_on_graph_edges():
    graph = disambiguate(duplicated_model()).to_networkx()
    labels = {data["label"] for _, _, data in graph.edges(data=True)}
    assert "1 / x := 1" in labels
    assert "1" in labels


def test_distinct_labels_need_no_auxiliary_variable():
    model = ExtractedModel([Valuation(a=0), Valuation(a=1)],
                           [ModelTransition(0, 1, 1), ModelTransition(1, 1, 0)], [0], 1, {"a": D2})
    assert disambiguate(model) is model


def test_auxiliary_name_avoids_declared_variables():
    assert aux_name({"a": D2}) == "x"
    assert aux_name({"x": D2}) == "x_aux"
    assert aux_name({"x": D2, "x_aux": D2, "x_sync": D2}) == "x_1"
