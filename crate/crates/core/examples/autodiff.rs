//! Fit `y = 3x - 1` with the tape and Adam, then check one gradient by hand.
use mixq::tensor::{Adam, ParamStore, Tape, Tensor};

fn main() -> mixq::Result<()> {
    let xs: Vec<f64> = (0..32).map(|i| i as f64 / 16.0 - 1.0).collect();
    let x = Tensor::new(vec![32, 1], xs.clone())?;
    let y = Tensor::new(vec![32, 1], xs.iter().map(|v| 3.0 * v - 1.0).collect())?;

    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::new(vec![1, 1], vec![0.0])?);
    let b = store.add("b", Tensor::new(vec![1], vec![0.0])?);
    let mut adam = Adam::new(0.05);
    for step in 0..400 {
        let tape = Tape::new();
        let pred = tape
            .constant(x.clone())
            .matmul(tape.param(&store, w))?
            .add(tape.param(&store, b))?;
        let err = pred.sub(tape.constant(y.clone()))?;
        let loss = err.mul(err)?.mean();
        if step % 100 == 0 {
            println!("step {step:3}  loss {:.6}", loss.value().item());
        }
        store.zero_grad();
        tape.backward_into(loss, &mut store)?;
        adam.step(&mut store);
    }
    println!(
        "w = {:.4}, b = {:.4}",
        store.value(w).item(),
        store.value(b).item()
    );

    // d/dv sum(exp(v) * v) = exp(v) * (1 + v)
    let tape = Tape::new();
    let v = tape.leaf(Tensor::vector(vec![0.5, -1.0]), true);
    let grads = tape.backward(v.exp().mul(v)?.sum())?;
    let g = grads.wrt(v).unwrap();
    for (i, &vi) in [0.5f64, -1.0].iter().enumerate() {
        println!(
            "grad[{i}] = {:.6}  expected {:.6}",
            g.data()[i],
            vi.exp() * (1.0 + vi)
        );
    }
    Ok(())
}
