from crackSeg import config
from crackSeg import models
from crackSeg import tensor
from crackSeg import network
from crackSeg import metrics
from crackSeg import optim
from crackSeg import data
from crackSeg import services
from crackSeg import reporting
