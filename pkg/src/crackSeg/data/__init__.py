from crackSeg.data.dataset import *
from crackSeg.data.transforms import *
from crackSeg.data.batches import *
from crackSeg.data.synthetic import *
