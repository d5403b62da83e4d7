use mtl_core::metrics::{accuracy, matthews_cc, pearson, spearman, uas, word_accuracy};

fn main() -> mtl_core::Result<()> {
    let gold = [1, 0, 1, 1, 0, 0];
    let pred = [1, 0, 0, 1, 0, 1];
    println!("accuracy {:.4}", accuracy(&pred, &gold)?);
    println!("mcc      {:.4}", matthews_cc(&pred, &gold)?);
    // a constant predictor has no correlation to report
    println!("mcc of constant predictions {:.4}", matthews_cc(&[1; 6], &gold)?);

    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let y = [1.0, 4.0, 9.0, 16.0, 100.0];
    println!("pearson  {:.4}", pearson(&x, &y)?);
    println!("spearman {:.4}", spearman(&x, &y)?);

    let tags = vec![vec![0, 1, 2], vec![2, 2]];
    let guess = vec![vec![0, 1, 1], vec![2, 0]];
    let mask = vec![vec![true; 3], vec![true, false]];
    println!("word acc {:.4}", word_accuracy(&guess, &tags, &mask)?);
    let heads = vec![vec![2, 0, 2]];
    println!("uas      {:.4}", uas(&heads, &[vec![Some(2), Some(0), Some(1)]])?);
    Ok(())
}
