from crackSeg.config import config
