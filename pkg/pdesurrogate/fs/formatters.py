def float_formatter(value):
    """
    Full precision float formatter (%.17g), enough digits to round-trip a float64
    :param value: The number to format
    :return: The formatted number with a newline appended
    """
    return '%.17g\n' % value


def mean_std_formatter(mean, std, digits=4):
    """
    Formats a sample summary the way the result tables print it, i.e. '1.86 ± 0.10'
    :param mean: Sample mean
    :param std: Sample standard deviation
    :param digits: Significant digits
    :return: The formatted summary
    """
    return '%.*g ± %.*g' % (digits, mean, digits - 1, std)


def sci_formatter(value, digits=2):
    """
    Scientific notation used for error columns, i.e. '3.0e-03'
    :param value: The number to format
    :param digits: Digits after the decimal point
    """
    return '%.*e' % (digits - 1, value)


def format_output(value, formatter):
    """
    Applies the formatting function, formatter, on value.
    If the resulting string does not have a newline adds it.
    :param value: The item to be string serialized
    :param formatter: The formatter function applied to value
    :return: The formatted string
    """
    formatted = formatter(value)
    if not formatted.endswith('\n'):
        formatted = formatted + '\n'
    return formatted
