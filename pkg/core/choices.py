from django.db import models


class IoUKind(models.TextChoices):
    IOU_3D = '3d', '3D IoU'
    BEV = 'bev', 'BEV IoU'


class ScoreMethod(models.TextChoices):
    IOUNC = 'iounc', 'IoU-guided uncertainty confidence'
    VANILLA = 'vanilla', 'Vanilla uncertainty confidence exp(-sigma)'
    CONSTANT = 'constant', 'Constant 3D confidence (2D score only)'


class DistributionFamily(models.TextChoices):
    LAPLACE = 'laplace', 'Laplace'
    GAUSS = 'gauss', 'Gaussian'


class LossMode(models.TextChoices):
    SUM = 'sum', 'Plain sum'
    HTL = 'htl', 'HTL-weighted sum'


class Difficulty(models.TextChoices):
    EASY = 'easy', 'Easy'
    MODERATE = 'moderate', 'Moderate'
    HARD = 'hard', 'Hard'
    ALL = 'all', 'All'
