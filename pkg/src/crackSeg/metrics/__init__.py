from crackSeg.metrics.dice import *
from crackSeg.metrics.tolerance import *
from crackSeg.metrics.evaluation import *
