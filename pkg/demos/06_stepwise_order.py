"""
Step-wise tuning depends on the order of the groups
===================================================

Tune one group at a time with the others held fixed. With an interaction
between the two parameters, the two orders stop at different answers.
"""
from faulttwin.scheduler import ParamGroup, stepwise_tune

# lower is better; (a=0, b=1) is the joint optimum
table = {(0, 0): 0.50, (1, 0): 0.40, (0, 1): 0.30, (1, 1): 0.45}


def metric(p):
    return table[p["a"], p["b"]]


a = ParamGroup("a", [{"a": 0}, {"a": 1}])
b = ParamGroup("b", [{"b": 0}, {"b": 1}])
start = {"a": 0, "b": 0}

for order in ([a, b], [b, a]):
    res = stepwise_tune(order, metric, start)
    names = " then ".join(g.name for g in order)
    print(f"{names}: {res.best_params} -> {metric(res.best_params)}")
    print(res.trace_csv())
