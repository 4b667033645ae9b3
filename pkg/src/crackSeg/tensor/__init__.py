from crackSeg.tensor.tensor import *
from crackSeg.tensor.ops import *
from crackSeg.tensor.gradcheck import *
