from crackSeg.models.configs import *
from crackSeg.models.records import *
