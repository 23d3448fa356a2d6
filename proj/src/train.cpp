namespace lsfd {}
