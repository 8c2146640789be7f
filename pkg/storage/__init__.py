"""Storage module: файловая система, сериализация результатов и конфигурация запусков"""
