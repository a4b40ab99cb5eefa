"""Accuracy estimation for knowledge graphs by iterative cluster sampling.

The package estimates the fraction of correct triples in a knowledge graph
from a small annotated sample. Entity clusters (all triples sharing a
subject) are the primary sampling unit for the cluster designs, which keeps
annotation cheap: identifying the subject entity once amortises over every
triple checked in that cluster. Sampling proceeds in small batches until the
margin of error of the estimate falls below a requested threshold.

Modules
-------
graph        entity-clustered triple store, deltas, snapshots
labels       gold and synthetic (REM / BMM) label sources
stats        normal quantiles
cost         annotation cost model, required sample sizes, optimal m
sampling     draw procedures for all designs plus the weighted reservoir
estimators   point estimates, variances and confidence intervals
strata       stratification rules and sample allocation
session      iterative evaluation sessions with a stopping rule
backends     annotation backends (oracle, file exchange, remote service)
evolve       incremental procedures for graphs that grow in batches
simulate     Monte Carlo harnesses over seeds
service      HTTP annotation service
cli          command line entry points
"""

__version__ = "0.1.0"
