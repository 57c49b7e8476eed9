"""Planning toolkit for running EDA flow stages on cloud machines.

Predicts stage runtimes on 1/2/4/8-vCPU machines from the design's graph
structure with a small graph convolutional network, then picks one machine
configuration per stage to minimize deployment cost under a total-runtime
deadline using a multi-choice knapsack dynamic program.
"""

__version__ = "0.1.0"
