__version__ = "1.0.0"
__author__ = "gilbus"
__license__ = "AGPLv3"
