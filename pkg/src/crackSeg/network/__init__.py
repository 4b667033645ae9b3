from crackSeg.network.layers import *
from crackSeg.network.resnet import *
from crackSeg.network.unet import *
from crackSeg.network.init import *
from crackSeg.network.checkpoint import *
