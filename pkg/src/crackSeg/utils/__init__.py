from crackSeg.utils.yaml_handler import *
from crackSeg.utils.file_handler import *
