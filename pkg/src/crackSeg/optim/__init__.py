from crackSeg.optim.adamw import *
from crackSeg.optim.schedule import *
