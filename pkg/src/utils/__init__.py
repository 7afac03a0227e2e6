# Label algebra, datasets, augmentation and run logging
