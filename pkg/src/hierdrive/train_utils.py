"""Small shared helpers for the training and evaluation loops."""


def batches_of(order, batch_size):
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size]
