from crackSeg.services.prefetch import *
from crackSeg.services.trainer import *
from crackSeg.services.ablation import *
from crackSeg.services.gradcheck_suite import *
